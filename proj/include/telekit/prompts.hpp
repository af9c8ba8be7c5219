#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>

// Prompt templates sent to the model endpoints. Placeholders are substituted
// verbatim; nothing is trimmed or escaped.
namespace telekit::prompts {

inline constexpr std::string_view kAbstractRelevance =
    "Given the following scientific paper abstract: {Abstract}, Answer by Yes or No if this paper is "
    "related to the telecommunications and networking domains.";

inline constexpr std::string_view kWebRelevance =
    "Given the following website content: {Website}, Answer by Yes or No if this content contains "
    "technical content about the telecommunications and networking domains.";

inline constexpr std::string_view kQnaGeneration =
    "Generate 5 questions and short answers based on the following passage: {Passage}. \n"
    "The questions should follow this format:\n"
    "Question 1: What frequency band does Bluetooth use?\n"
    "Answer 1: 2.4 GHz\n"
    "Question 2: Which pairs of wires are used in 10/100Base-T?\n"
    "Answer 2: Pair 2 and pair 3\n"
    "Question 3: What is a Heterogeneous Network?\n"
    "Answer 3: A network consisting of multiple cells with\n"
    "different characteristics";

inline constexpr std::string_view kAnswerability =
    "Answer by Yes or No if I can find the answer to this question online without access to the "
    "material from which the question came: {question}";

inline constexpr std::string_view kAnswerFormat =
    "The following is a question about telecommunications and networking.\n"
    "Question: {{statement}}\n"
    "Answer:";

inline constexpr std::string_view kJudge =
    "Task: Evaluate the correctness of a provided answer to a telecommunications and networking question. \n"
    "Question: {question}\n"
    "Ground Truth Answer: {ground_truth}\n"
    "Provided Answer: {prediction}\n"
    "Instructions:\n"
    "1. Compare the Provided Answer to the Ground Truth Answer.\n"
    "2. Determine if the Provided Answer is correct based on the Ground Truth Answer.\n"
    "3. Respond with only Yes or No.\n"
    "Is the Provided Answer correct?";

// The three worked examples embedded in the generation prompt.
inline constexpr std::array<std::pair<std::string_view, std::string_view>, 3> kShotExamples = {{
    {"What frequency band does Bluetooth use?", "2.4 GHz"},
    {"Which pairs of wires are used in 10/100Base-T?", "Pair 2 and pair 3"},
    {"What is a Heterogeneous Network?", "A network consisting of multiple cells with different characteristics"},
}};

// Replaces the first occurrence of `placeholder` in `tmpl`.
std::string fill(std::string_view tmpl, std::string_view placeholder, std::string_view value);

std::string abstract_relevance(std::string_view abstract);
std::string web_relevance(std::string_view content);
std::string qna_generation(std::string_view passage);
std::string answerability(std::string_view question);
std::string answer_format(std::string_view statement);
std::string judge(std::string_view question, std::string_view ground_truth, std::string_view prediction);

}  // namespace telekit::prompts
