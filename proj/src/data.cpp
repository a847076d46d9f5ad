#include "focal/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include "focal/error.hpp"

namespace focal {

TokenStream tokenize_bytes(std::string_view text, std::string source_id) {
    TokenStream s;
    s.source_id = std::move(source_id);
    s.tokens.reserve(text.size());
    for (char c : text) s.tokens.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(c)));
    return s;
}

std::string detokenize(std::span<const std::int32_t> ids) {
    std::string out;
    out.reserve(ids.size());
    for (std::int32_t id : ids) {
        if (id < 0 || id > token::kPad) throw DataError("detokenize: id " + std::to_string(id) + " outside byte vocabulary");
        if (id < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    }
    return out;
}

void append_document(TokenStream& stream, std::string_view text) {
    stream.tokens.push_back(token::kBos);
    for (char c : text) stream.tokens.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(c)));
    stream.tokens.push_back(token::kEos);
}

TokenStream read_corpus(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    std::error_code ec;
    if (fs::is_directory(path, ec)) {
        for (const auto& entry : fs::recursive_directory_iterator(path, ec)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(path, ec)) {
        files.push_back(path);
    }
    if (files.empty()) throw IoError("corpus: no readable files at " + path.string());
    TokenStream stream;
    stream.source_id = path.string();
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw IoError("corpus: cannot open " + f.string());
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        append_document(stream, text);
    }
    return stream;
}

namespace {

constexpr std::array<std::string_view, 120> kWords = {
    "the",    "of",     "and",    "to",     "in",     "a",       "is",     "that",   "for",    "it",
    "as",     "was",    "with",   "be",     "by",     "on",      "not",    "he",     "this",   "are",
    "or",     "his",    "from",   "at",     "which",  "but",     "have",   "an",     "had",    "they",
    "you",    "were",   "their",  "one",    "all",    "we",      "can",    "her",    "has",    "there",
    "been",   "if",     "more",   "when",   "will",   "would",   "who",    "so",     "no",     "she",
    "other",  "its",    "may",    "these",  "about",  "into",    "than",   "them",   "only",   "time",
    "some",   "could",  "new",    "people", "two",    "first",   "any",    "made",   "like",   "after",
    "many",   "such",   "where",  "most",   "over",   "years",   "world",  "river",  "city",   "light",
    "water",  "house",  "garden", "market", "letter", "morning", "winter", "story",  "paper",  "stone",
    "small",  "large",  "quiet",  "bright", "early",  "green",   "old",    "young",  "long",   "short",
    "walked", "found",  "kept",   "turned", "opened", "carried", "built",  "wrote",  "heard",  "left",
    "slowly", "always", "never",  "often",  "again",  "together", "nearly", "almost", "still", "perhaps",
};

}  // namespace

std::string word_salad(std::size_t n_words, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, kWords.size() - 1);
    std::uniform_int_distribution<std::size_t> sentence_len(6, 14);
    std::string out;
    std::size_t left_in_sentence = 0;
    bool capitalize = true;
    for (std::size_t i = 0; i < n_words; ++i) {
        if (left_in_sentence == 0) left_in_sentence = sentence_len(rng);
        std::string word(kWords[pick(rng)]);
        if (capitalize) {
            word[0] = static_cast<char>(word[0] - 'a' + 'A');
            capitalize = false;
        }
        if (!out.empty()) out.push_back(' ');
        out += word;
        if (--left_in_sentence == 0 || i + 1 == n_words) {
            out.push_back('.');
            capitalize = true;
        }
    }
    return out;
}

PackedSequences pack_sequences(const TokenStream& stream, std::size_t seq_len) {
    if (seq_len == 0) throw ConfigError("pack: seq_len must be > 0");
    const std::size_t total = stream.tokens.size();
    if (total < seq_len) {
        throw DataError("pack: corpus of " + std::to_string(total) + " tokens is shorter than one sequence of " +
                        std::to_string(seq_len));
    }
    PackedSequences p;
    p.seq_len = seq_len;
    p.count = total / seq_len;
    const std::size_t used = p.count * seq_len;
    p.inputs.assign(stream.tokens.begin(), stream.tokens.begin() + static_cast<std::ptrdiff_t>(used));
    p.targets.resize(used);
    for (std::size_t i = 0; i < used; ++i) {
        const bool boundary = stream.tokens[i] == token::kEos;
        p.targets[i] = (boundary || i + 1 >= total) ? token::kPad : stream.tokens[i + 1];
    }
    return p;
}

BatchIterator::BatchIterator(std::shared_ptr<const PackedSequences> packed, std::vector<std::size_t> indices,
                             std::size_t batch_size, std::uint64_t seed)
    : packed_(std::move(packed)), indices_(std::move(indices)), batch_size_(batch_size), seed_(seed) {
    if (indices_.empty()) throw DataError("batch iterator: no sequences");
    if (batch_size_ == 0) throw ConfigError("batch iterator: batch_size must be > 0");
}

std::vector<std::size_t> BatchIterator::epoch_order(std::uint64_t epoch) const {
    std::vector<std::size_t> order = indices_;
    std::mt19937_64 rng(derive_seed(seed_, "epoch-" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

Batch BatchIterator::batch_at(std::uint64_t index) const {
    const std::size_t L = packed_->seq_len;
    Batch b;
    b.batch_size = batch_size_;
    b.seq_len = L;
    b.inputs.resize(batch_size_ * L);
    b.targets.resize(batch_size_ * L);
    const std::uint64_t n = indices_.size();
    for (std::size_t r = 0; r < batch_size_; ++r) {
        const std::uint64_t flat = index * batch_size_ + r;
        const std::uint64_t epoch = flat / n;
        if (epoch != cached_epoch_) {
            cached_order_ = epoch_order(epoch);
            cached_epoch_ = epoch;
        }
        const std::size_t seq = cached_order_[flat % n];
        std::copy_n(packed_->inputs.begin() + static_cast<std::ptrdiff_t>(seq * L), L, b.inputs.begin() + static_cast<std::ptrdiff_t>(r * L));
        std::copy_n(packed_->targets.begin() + static_cast<std::ptrdiff_t>(seq * L), L, b.targets.begin() + static_cast<std::ptrdiff_t>(r * L));
    }
    return b;
}

Batch BatchIterator::next() { return batch_at(cursor_++); }

BatchIterator pack(const TokenStream& stream, std::size_t seq_len, std::size_t batch_size, std::uint64_t seed) {
    auto packed = std::make_shared<const PackedSequences>(pack_sequences(stream, seq_len));
    std::vector<std::size_t> all(packed->count);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return BatchIterator(std::move(packed), std::move(all), batch_size, seed);
}

DataSplit split_corpus(const TokenStream& stream, std::size_t seq_len, std::size_t batch_size,
                       std::size_t val_batches, std::uint64_t seed) {
    auto packed = std::make_shared<const PackedSequences>(pack_sequences(stream, seq_len));
    const std::size_t val_sequences = val_batches * batch_size;
    if (packed->count < val_sequences + batch_size) {
        throw DataError("split: corpus packs into " + std::to_string(packed->count) + " sequences; need " +
                        std::to_string(val_sequences + batch_size) + " for validation plus one training batch");
    }
    std::vector<std::size_t> order(packed->count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, "split"));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_sequences));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(val_sequences), order.end());
    std::sort(train_idx.begin(), train_idx.end());

    std::vector<Batch> validation;
    const std::size_t L = seq_len;
    for (std::size_t v = 0; v < val_batches; ++v) {
        Batch b;
        b.batch_size = batch_size;
        b.seq_len = L;
        for (std::size_t r = 0; r < batch_size; ++r) {
            const std::size_t seq = val_idx[v * batch_size + r];
            b.inputs.insert(b.inputs.end(), packed->inputs.begin() + static_cast<std::ptrdiff_t>(seq * L),
                            packed->inputs.begin() + static_cast<std::ptrdiff_t>((seq + 1) * L));
            b.targets.insert(b.targets.end(), packed->targets.begin() + static_cast<std::ptrdiff_t>(seq * L),
                             packed->targets.begin() + static_cast<std::ptrdiff_t>((seq + 1) * L));
        }
        validation.push_back(std::move(b));
    }
    return DataSplit{BatchIterator(packed, std::move(train_idx), batch_size, derive_seed(seed, "train-order")),
                     std::move(validation)};
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
    // FNV-1a over the name, mixed with the root through splitmix64.
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    std::uint64_t z = root ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace focal
