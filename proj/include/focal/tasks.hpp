#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "focal/data.hpp"
#include "focal/model.hpp"

namespace focal {

enum class TaskKind { kv_recall, needle_uuid, icl_classify, copy };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

/// One generated probe. The prompt is fed after a BOS token, so token index
/// i + 1 holds prompt byte i; `relevant` uses token indices.
struct TaskInstance {
    TaskKind kind = TaskKind::kv_recall;
    std::size_t context_length = 0;
    std::uint64_t seed = 0;
    std::string prompt;
    std::string answer;
    std::vector<std::int32_t> prompt_tokens;  // BOS + prompt bytes
    std::vector<std::int32_t> answer_tokens;  // answer bytes
    std::vector<std::size_t> relevant;        // token positions holding the evidence
    std::map<std::string, std::string> metadata;

    /// Prompt followed by the answer as one document body (no specials).
    std::string full_text() const { return prompt + answer; }
};

/// JSON object of random 8-hex-char keys and values, then a query for one
/// key. n_pairs == 0 fits as many pairs as the context allows. Prompt plus
/// answer fit in `context_length` tokens (BOS included); ConfigError otherwise.
TaskInstance gen_kv_recall(std::size_t n_pairs, std::size_t context_length, std::uint64_t seed);

/// Largest pair count gen_kv_recall fits in `context_length` (0 if none).
std::size_t kv_recall_max_pairs(std::size_t context_length);

/// Word-salad haystack with one target needle and `n_distractors` decoys at
/// random sentence boundaries; the query names the target's key.
/// `haystack_len` is the token budget for prompt plus answer.
TaskInstance gen_needle_uuid(std::size_t haystack_len, std::size_t n_distractors, std::uint64_t seed);

/// Few-shot classification over `n_labels` nonce labels, each signalled by a
/// cue word inside the input. Labels are assigned round-robin then shuffled.
/// With context_length > 0 the shot count shrinks until the prompt fits;
/// n_shots == 0 then means "as many as fit".
TaskInstance gen_icl_classify(std::size_t n_labels, std::size_t n_shots, std::uint64_t seed,
                              std::size_t context_length = 0);

/// Repeat a random lowercase string of `length` characters.
TaskInstance gen_copy(std::size_t length, std::size_t context_length, std::uint64_t seed);

/// Generic description of a batch of probes.
struct TaskSpec {
    TaskKind kind = TaskKind::kv_recall;
    std::size_t context_length = 256;
    std::size_t knob = 0;   // pairs / distractors / labels / copy length
    std::size_t shots = 0;  // icl_classify only
    std::size_t count = 20;
    std::uint64_t seed = 0;
};

std::vector<TaskInstance> generate(const TaskSpec& spec);

std::string to_json_line(const TaskInstance& instance);

/// Training text mixing kv_recall documents with word salad.
struct SyntheticMix {
    std::size_t documents = 2000;
    double kv_fraction = 0.5;
    std::size_t kv_context = 256;
    std::size_t kv_pairs_min = 2;
    std::size_t kv_pairs_max = 8;
    std::size_t salad_words = 60;

    bool operator==(const SyntheticMix&) const = default;
};

TokenStream synthetic_corpus(const SyntheticMix& mix, std::uint64_t seed);

struct InstanceScore {
    std::string prediction;
    bool correct = false;
};

struct TaskScore {
    double accuracy = 0;
    std::vector<InstanceScore> records;
};

/// Greedy decoding of answer-length continuations, exact match on the answer.
template <typename T>
TaskScore score_task(const Model<T>& model, const std::vector<TaskInstance>& instances);

}  // namespace focal
