#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "telekit/gateway.hpp"
#include "telekit/packer.hpp"

namespace telekit::config {

// Directory holding the shipped keyword list, filter bank, blocklist and
// section patterns.
std::filesystem::path default_data_dir();

// {
//   "endpoints": {"judge": {...}, "generator": {...}, ...},
//   "keywords": path, "filter_bank": path, "blocklist": path, "section_patterns": path,
//   "tokenizer": "byte" | "word", "seed": int, "workers": int, "transcript": path,
//   "recipe": {"context_length": ..., "epochs": ..., ...}
// }
// Relative paths are resolved against the config file's directory.
struct PipelineConfig {
    std::map<gateway::Capability, gateway::EndpointConfig> endpoints;
    std::filesystem::path keywords;
    std::filesystem::path filter_bank;
    std::filesystem::path blocklist;
    std::filesystem::path section_patterns;
    std::string tokenizer = "byte";
    std::uint64_t seed = 0;
    std::size_t workers = 0;  // 0 = available cores
    std::optional<std::filesystem::path> transcript;
    packer::RecipeConfig recipe;

    static PipelineConfig defaults();
    // Starts from defaults(); throws config_invalid.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    // Throws config_invalid naming the path when the file is missing or bad.
    static PipelineConfig load(const std::filesystem::path& path);

    // Every endpoint in `required` configured and valid; the data files
    // exist; the tokenizer is known.
    void validate(std::span<const gateway::Capability> required) const;

    std::size_t effective_workers() const;
    // Sets every capability to the built-in mock with `options`.
    void use_mock(const nlohmann::json& options = nlohmann::json::object());
};

}  // namespace telekit::config
