#include "telekit/prompts.hpp"

namespace telekit::prompts {

std::string fill(std::string_view tmpl, std::string_view placeholder, std::string_view value) {
    std::string out(tmpl);
    const auto pos = out.find(placeholder);
    if (pos != std::string::npos) out.replace(pos, placeholder.size(), value);
    return out;
}

std::string abstract_relevance(std::string_view abstract) { return fill(kAbstractRelevance, "{Abstract}", abstract); }

std::string web_relevance(std::string_view content) { return fill(kWebRelevance, "{Website}", content); }

std::string qna_generation(std::string_view passage) { return fill(kQnaGeneration, "{Passage}", passage); }

std::string answerability(std::string_view question) { return fill(kAnswerability, "{question}", question); }

std::string answer_format(std::string_view statement) { return fill(kAnswerFormat, "{{statement}}", statement); }

std::string judge(std::string_view question, std::string_view ground_truth, std::string_view prediction) {
    // Placeholders are located in the template, so values containing braces stay intact.
    const std::pair<std::string_view, std::string_view> subs[] = {
        {"{question}", question}, {"{ground_truth}", ground_truth}, {"{prediction}", prediction}};
    std::string out;
    std::size_t last = 0;
    for (const auto& [ph, value] : subs) {
        const auto pos = kJudge.find(ph, last);
        out.append(kJudge.substr(last, pos - last));
        out.append(value);
        last = pos + ph.size();
    }
    out.append(kJudge.substr(last));
    return out;
}

}  // namespace telekit::prompts
