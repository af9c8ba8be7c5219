#include "telekit/config.hpp"

#include <fstream>

#include "telekit/io.hpp"
#include "telekit/parallel.hpp"
#include "telekit/tokenizer.hpp"

namespace telekit::config {

namespace fs = std::filesystem;

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("TELEKIT_DATA_DIR")) return env;
    return TELEKIT_DATA_DIR;
}

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig c;
    const auto dir = default_data_dir();
    c.keywords = dir / "keywords.txt";
    c.filter_bank = dir / "filter_bank.tsv";
    c.blocklist = dir / "latex_blocklist.txt";
    c.section_patterns = dir / "section_patterns.txt";
    return c;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw Error(ErrorCode::config_invalid, "config must be a JSON object");
    auto c = defaults();
    auto path = [&](const char* key, fs::path& into) {
        if (!j.contains(key)) return;
        fs::path p = j.at(key).get<std::string>();
        into = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    try {
        if (j.contains("endpoints")) {
            for (const auto& [name, ep] : j.at("endpoints").items()) {
                const auto cap = gateway::parse_capability(name);
                if (!cap) throw Error(ErrorCode::config_invalid, "unknown endpoint capability: " + name);
                auto copy = ep;
                copy["capability"] = name;
                if (copy.contains("base_url")) {
                    auto url = copy["base_url"].get<std::string>();
                    if (url.starts_with("replay:") && !base_dir.empty() && fs::path(url.substr(7)).is_relative()) {
                        copy["base_url"] = "replay:" + (base_dir / url.substr(7)).string();
                    }
                }
                c.endpoints[*cap] = gateway::EndpointConfig::from_json(copy);
            }
        }
        path("keywords", c.keywords);
        path("filter_bank", c.filter_bank);
        path("blocklist", c.blocklist);
        path("section_patterns", c.section_patterns);
        if (j.contains("transcript")) {
            fs::path t;
            path("transcript", t);
            c.transcript = t;
        }
        c.tokenizer = j.value("tokenizer", c.tokenizer);
        c.seed = j.value("seed", c.seed);
        c.workers = j.value("workers", c.workers);
        c.recipe.seed = c.seed;
        c.recipe.tokenizer = c.tokenizer;
        if (j.contains("recipe")) {
            const auto& r = j.at("recipe");
            c.recipe.batch_size_tokens = r.value("batch_size_tokens", c.recipe.batch_size_tokens);
            c.recipe.context_length = r.value("context_length", c.recipe.context_length);
            c.recipe.optimizer = r.value("optimizer", c.recipe.optimizer);
            c.recipe.weight_decay = r.value("weight_decay", c.recipe.weight_decay);
            c.recipe.max_grad_norm = r.value("max_grad_norm", c.recipe.max_grad_norm);
            c.recipe.min_lr_ratio = r.value("min_lr_ratio", c.recipe.min_lr_ratio);
            c.recipe.warmup_epochs = r.value("warmup_epochs", c.recipe.warmup_epochs);
            c.recipe.max_lr = r.value("max_lr", c.recipe.max_lr);
            c.recipe.epochs = r.value("epochs", c.recipe.epochs);
            c.recipe.mix_fraction = r.value("mix_fraction", c.recipe.mix_fraction);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config_invalid, std::string("config: ") + e.what());
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorCode::config_invalid, "config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config_invalid, path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::config_invalid, path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

void PipelineConfig::validate(std::span<const gateway::Capability> required) const {
    for (const auto cap : required) {
        const auto it = endpoints.find(cap);
        if (it == endpoints.end()) {
            throw Error(ErrorCode::config_invalid,
                        "no " + std::string(gateway::to_string(cap)) + " endpoint configured");
        }
        it->second.validate();
    }
    try {
        (void)make_tokenizer(tokenizer);
    } catch (const Error& e) {
        throw Error(ErrorCode::config_invalid, e.what());
    }
    recipe.validate();
}

std::size_t PipelineConfig::effective_workers() const { return workers == 0 ? default_workers() : workers; }

void PipelineConfig::use_mock(const nlohmann::json& options) {
    for (const auto cap : {gateway::Capability::scorer, gateway::Capability::generator,
                           gateway::Capability::embedder, gateway::Capability::judge}) {
        gateway::EndpointConfig ep;
        ep.base_url = "mock:";
        ep.capability = cap;
        ep.model_name = "mock-" + std::string(gateway::to_string(cap));
        ep.options = options;
        endpoints[cap] = ep;
    }
}

}  // namespace telekit::config
