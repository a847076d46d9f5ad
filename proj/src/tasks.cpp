#include "focal/tasks.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "focal/error.hpp"

namespace focal {

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::kv_recall: return "kv_recall";
        case TaskKind::needle_uuid: return "needle_uuid";
        case TaskKind::icl_classify: return "icl_classify";
        case TaskKind::copy: return "copy";
    }
    return "unknown";
}

TaskKind task_kind_from_string(const std::string& name) {
    for (TaskKind k : {TaskKind::kv_recall, TaskKind::needle_uuid, TaskKind::icl_classify, TaskKind::copy}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown task kind '" + name + "'");
}

namespace {

std::string hex_chars(std::mt19937_64& rng, std::size_t n) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::uniform_int_distribution<int> digit(0, 15);
    std::string s(n, '0');
    for (char& c : s) c = kHex[digit(rng)];
    return s;
}

// Pronounceable lowercase word alternating consonants and vowels.
std::string nonce_word(std::mt19937_64& rng, std::size_t len) {
    static constexpr std::string_view kCons = "bdfgklmnprstvz";
    static constexpr std::string_view kVowel = "aeiou";
    std::uniform_int_distribution<std::size_t> c(0, kCons.size() - 1), v(0, kVowel.size() - 1);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s.push_back(i % 2 == 0 ? kCons[c(rng)] : kVowel[v(rng)]);
    return s;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

void add_span(TaskInstance& inst, std::size_t byte_offset, std::size_t length) {
    for (std::size_t i = 0; i < length; ++i) inst.relevant.push_back(byte_offset + i + 1);
}

void finish(TaskInstance& inst) {
    inst.prompt_tokens.clear();
    inst.prompt_tokens.push_back(token::kBos);
    for (char c : inst.prompt) inst.prompt_tokens.push_back(static_cast<unsigned char>(c));
    inst.answer_tokens.clear();
    for (char c : inst.answer) inst.answer_tokens.push_back(static_cast<unsigned char>(c));
}

std::size_t budget_tokens(const std::string& prompt, const std::string& answer) {
    return 1 + prompt.size() + answer.size();
}

}  // namespace

namespace {
constexpr std::size_t kPair = 22;   // "xxxxxxxx": "yyyyyyyy"
constexpr std::size_t kFixed = 23;  // BOS, braces, newline, query, answer, less one separator
}  // namespace

std::size_t kv_recall_max_pairs(std::size_t context_length) {
    return context_length > kFixed ? (context_length - kFixed) / (kPair + 2) : 0;
}

TaskInstance gen_kv_recall(std::size_t n_pairs, std::size_t context_length, std::uint64_t seed) {
    if (n_pairs == 0) {
        n_pairs = kv_recall_max_pairs(context_length);
        if (n_pairs == 0) throw ConfigError("kv_recall: context " + std::to_string(context_length) + " too short");
    }
    if (kFixed + n_pairs * (kPair + 2) > context_length) {
        throw ConfigError("kv_recall: " + std::to_string(n_pairs) + " pairs do not fit in context " +
                          std::to_string(context_length));
    }
    std::mt19937_64 rng(seed);
    for (;;) {
        std::vector<std::string> keys, values;
        std::set<std::string> seen;
        while (keys.size() < n_pairs) {
            std::string k = hex_chars(rng, 8);
            if (!seen.insert(k).second) continue;
            keys.push_back(std::move(k));
            values.push_back(hex_chars(rng, 8));
        }
        const std::size_t q = std::uniform_int_distribution<std::size_t>(0, n_pairs - 1)(rng);

        TaskInstance inst;
        inst.kind = TaskKind::kv_recall;
        inst.context_length = context_length;
        inst.seed = seed;
        inst.prompt = "{";
        std::size_t span_start = 0;
        for (std::size_t i = 0; i < n_pairs; ++i) {
            if (i > 0) inst.prompt += ", ";
            if (i == q) span_start = inst.prompt.size();
            inst.prompt += "\"" + keys[i] + "\": \"" + values[i] + "\"";
        }
        inst.prompt += "}\n\"" + keys[q] + "\": \"";
        inst.answer = values[q];
        if (count_occurrences(inst.prompt, inst.answer) != 1) continue;
        add_span(inst, span_start, kPair);
        inst.metadata["n_pairs"] = std::to_string(n_pairs);
        inst.metadata["query_index"] = std::to_string(q);
        inst.metadata["key"] = keys[q];
        finish(inst);
        return inst;
    }
}

namespace {

std::string uuid(std::mt19937_64& rng) {
    return hex_chars(rng, 8) + "-" + hex_chars(rng, 4) + "-" + hex_chars(rng, 4) + "-" + hex_chars(rng, 4) + "-" +
           hex_chars(rng, 12);
}

std::string needle_sentence(const std::string& key, const std::string& value) {
    return "The special magic number for " + key + " is: " + value + ".";
}

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '.') {
            out.push_back(text.substr(start, i + 1 - start));
            start = i + 2;  // skip the following space
        }
    }
    return out;
}

}  // namespace

TaskInstance gen_needle_uuid(std::size_t haystack_len, std::size_t n_distractors, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::set<std::string> used_keys;
    auto fresh_key = [&] {
        for (;;) {
            std::string k = nonce_word(rng, 7);
            if (used_keys.insert(k).second) return k;
        }
    };
    const std::string target_key = fresh_key();
    const std::string target_value = uuid(rng);
    std::vector<std::string> needles{needle_sentence(target_key, target_value)};
    for (std::size_t i = 0; i < n_distractors; ++i) needles.push_back(needle_sentence(fresh_key(), uuid(rng)));

    const std::string query = "\nWhat is the special magic number for " + target_key +
                              "? The special magic number for " + target_key + " is: ";
    std::size_t needed = 1 + query.size() + target_value.size();
    for (const auto& n : needles) needed += n.size() + 1;
    if (needed > haystack_len) {
        throw ConfigError("needle_uuid: needles and query need " + std::to_string(needed) + " tokens, context is " +
                          std::to_string(haystack_len));
    }

    // Filler sentences until the budget is exhausted.
    const std::size_t filler_budget = haystack_len - needed;
    const auto sentences = split_sentences(word_salad(filler_budget / 4 + 16, rng()));
    std::vector<std::string> items;
    std::size_t filler_used = 0;
    for (const auto& s : sentences) {
        if (filler_used + s.size() + 1 > filler_budget) break;
        items.push_back(s);
        filler_used += s.size() + 1;
    }

    // Needles at uniform random boundaries; the target keeps a marker index.
    std::vector<std::size_t> order(needles.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> inserts;  // (boundary, needle)
    for (std::size_t n : order) {
        inserts.emplace_back(std::uniform_int_distribution<std::size_t>(0, items.size())(rng), n);
    }
    std::stable_sort(inserts.begin(), inserts.end(), [](auto a, auto b) { return a.first < b.first; });

    TaskInstance inst;
    inst.kind = TaskKind::needle_uuid;
    inst.context_length = haystack_len;
    inst.seed = seed;
    std::size_t next = 0;
    auto append = [&](const std::string& s) {
        if (!inst.prompt.empty()) inst.prompt.push_back(' ');
        inst.prompt += s;
    };
    for (std::size_t b = 0; b <= items.size(); ++b) {
        for (; next < inserts.size() && inserts[next].first == b; ++next) {
            append(needles[inserts[next].second]);
            if (inserts[next].second == 0) {
                const std::size_t start = inst.prompt.size() - needles[0].size();
                add_span(inst, start, needles[0].size());
                inst.metadata["needle_offset"] = std::to_string(start);
            }
        }
        if (b < items.size()) append(items[b]);
    }
    inst.prompt += query;
    inst.answer = target_value;
    inst.metadata["key"] = target_key;
    inst.metadata["n_distractors"] = std::to_string(n_distractors);
    finish(inst);
    return inst;
}

namespace {

struct IclVocabulary {
    std::vector<std::string> labels;
    std::vector<std::string> cues;
    std::vector<std::string> filler;
};

IclVocabulary icl_vocabulary(std::size_t n_labels, std::mt19937_64& rng) {
    IclVocabulary v;
    std::set<std::string> used;
    auto fresh = [&](std::size_t len) {
        for (;;) {
            std::string w = nonce_word(rng, len);
            if (used.insert(w).second) return w;
        }
    };
    for (std::size_t i = 0; i < n_labels; ++i) v.labels.push_back(fresh(5));
    for (std::size_t i = 0; i < n_labels; ++i) v.cues.push_back(fresh(4));
    for (std::size_t i = 0; i < 24; ++i) v.filler.push_back(fresh(3));
    return v;
}

std::string icl_input(const IclVocabulary& v, std::size_t label, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> f(0, v.filler.size() - 1);
    return "input: " + v.filler[f(rng)] + " " + v.cues[label] + " " + v.filler[f(rng)] + "\nlabel: ";
}

TaskInstance build_icl(std::size_t n_labels, std::size_t shots, std::uint64_t seed, std::size_t context_length) {
    std::mt19937_64 rng(seed);
    const IclVocabulary v = icl_vocabulary(n_labels, rng);
    std::vector<std::size_t> shot_labels(shots);
    for (std::size_t i = 0; i < shots; ++i) shot_labels[i] = i % n_labels;
    std::shuffle(shot_labels.begin(), shot_labels.end(), rng);
    const std::size_t present = std::min(shots, n_labels);
    const std::size_t answer = std::uniform_int_distribution<std::size_t>(0, present - 1)(rng);

    TaskInstance inst;
    inst.kind = TaskKind::icl_classify;
    inst.context_length = context_length;
    inst.seed = seed;
    for (std::size_t label : shot_labels) {
        inst.prompt += icl_input(v, label, rng);
        if (label == answer) add_span(inst, inst.prompt.size(), v.labels[label].size());
        inst.prompt += v.labels[label] + "\n\n";
    }
    inst.prompt += icl_input(v, answer, rng);
    inst.answer = v.labels[answer];
    inst.metadata["n_labels"] = std::to_string(n_labels);
    inst.metadata["n_shots"] = std::to_string(shots);
    inst.metadata["cue"] = v.cues[answer];
    finish(inst);
    return inst;
}

}  // namespace

TaskInstance gen_icl_classify(std::size_t n_labels, std::size_t n_shots, std::uint64_t seed,
                              std::size_t context_length) {
    if (n_labels == 0) throw ConfigError("icl_classify: n_labels must be > 0");
    if (context_length == 0) {
        if (n_shots == 0) throw ConfigError("icl_classify: n_shots must be > 0 without a context length");
        return build_icl(n_labels, n_shots, seed, 0);
    }
    // Each demonstration takes at least 30 bytes.
    std::size_t shots = n_shots == 0 ? context_length / 30 + 1 : n_shots;
    for (; shots > 0; --shots) {
        TaskInstance inst = build_icl(n_labels, shots, seed, context_length);
        if (budget_tokens(inst.prompt, inst.answer) <= context_length) return inst;
    }
    throw ConfigError("icl_classify: not even one demonstration fits in context " + std::to_string(context_length));
}

TaskInstance gen_copy(std::size_t length, std::size_t context_length, std::uint64_t seed) {
    if (length == 0) throw ConfigError("copy: length must be > 0");
    if (1 + 2 * length + 3 > context_length) {
        throw ConfigError("copy: length " + std::to_string(length) + " does not fit in context " +
                          std::to_string(context_length));
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> letter('a', 'z');
    TaskInstance inst;
    inst.kind = TaskKind::copy;
    inst.context_length = context_length;
    inst.seed = seed;
    std::string s(length, 'a');
    for (char& c : s) c = static_cast<char>(letter(rng));
    inst.prompt = s + " | ";
    inst.answer = s;
    add_span(inst, 0, length);
    finish(inst);
    return inst;
}

std::vector<TaskInstance> generate(const TaskSpec& spec) {
    std::vector<TaskInstance> out;
    out.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) {
        const std::uint64_t s = derive_seed(spec.seed, to_string(spec.kind) + "-" + std::to_string(i));
        switch (spec.kind) {
            case TaskKind::kv_recall: out.push_back(gen_kv_recall(spec.knob, spec.context_length, s)); break;
            case TaskKind::needle_uuid: out.push_back(gen_needle_uuid(spec.context_length, spec.knob, s)); break;
            case TaskKind::icl_classify:
                out.push_back(gen_icl_classify(std::max<std::size_t>(spec.knob, 1), spec.shots, s, spec.context_length));
                break;
            case TaskKind::copy:
                out.push_back(gen_copy(spec.knob == 0 ? 16 : spec.knob, spec.context_length, s));
                break;
        }
    }
    return out;
}

std::string to_json_line(const TaskInstance& inst) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(inst.kind);
    j["context_length"] = inst.context_length;
    j["seed"] = inst.seed;
    j["prompt"] = inst.prompt;
    j["answer"] = inst.answer;
    j["relevant"] = inst.relevant;
    j["metadata"] = inst.metadata;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

TokenStream synthetic_corpus(const SyntheticMix& mix, std::uint64_t seed) {
    if (mix.kv_pairs_min == 0 || mix.kv_pairs_min > mix.kv_pairs_max) {
        throw ConfigError("synthetic mix: need 0 < kv_pairs_min <= kv_pairs_max");
    }
    if (!(mix.kv_fraction >= 0.0 && mix.kv_fraction <= 1.0)) throw ConfigError("synthetic mix: kv_fraction in [0, 1]");
    if (mix.kv_fraction > 0.0 && mix.kv_pairs_max > kv_recall_max_pairs(mix.kv_context)) {
        throw ConfigError("synthetic mix: " + std::to_string(mix.kv_pairs_max) + " pairs do not fit in kv_context " +
                          std::to_string(mix.kv_context));
    }
    std::mt19937_64 rng(derive_seed(seed, "mix"));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pairs(mix.kv_pairs_min, mix.kv_pairs_max);
    TokenStream stream;
    stream.source_id = "synthetic";
    stream.shuffle_seed = seed;
    for (std::size_t d = 0; d < mix.documents; ++d) {
        const std::string tag = std::to_string(d);
        if (coin(rng) < mix.kv_fraction) {
            const TaskInstance inst = gen_kv_recall(pairs(rng), mix.kv_context, derive_seed(seed, "kv-" + tag));
            append_document(stream, inst.full_text());
        } else {
            append_document(stream, word_salad(mix.salad_words, derive_seed(seed, "salad-" + tag)));
        }
    }
    return stream;
}

template <typename T>
TaskScore score_task(const Model<T>& model, const std::vector<TaskInstance>& instances) {
    TaskScore score;
    const std::size_t vocab = model.config().vocab_size;
    std::size_t correct = 0;
    for (const TaskInstance& inst : instances) {
        std::vector<std::int32_t> tokens = inst.prompt_tokens;
        std::vector<std::int32_t> generated;
        for (std::size_t step = 0; step < inst.answer_tokens.size(); ++step) {
            Graph<T> g(false);
            const Tensor<T> logits = model.forward(g, tokens);
            const auto row = logits.data().subspan((tokens.size() - 1) * vocab, vocab);
            const auto best = static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin());
            generated.push_back(best);
            tokens.push_back(best);
        }
        InstanceScore rec;
        rec.correct = generated == inst.answer_tokens;
        for (std::int32_t id : generated) {
            if (id < 256) rec.prediction.push_back(static_cast<char>(static_cast<unsigned char>(id)));
        }
        correct += rec.correct ? 1 : 0;
        score.records.push_back(std::move(rec));
    }
    score.accuracy = instances.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(instances.size());
    return score;
}

template TaskScore score_task<float>(const Model<float>&, const std::vector<TaskInstance>&);
template TaskScore score_task<double>(const Model<double>&, const std::vector<TaskInstance>&);

}  // namespace focal
