#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "karmanet/context_features.hpp"
#include "karmanet/model.hpp"
#include "karmanet/quantizer.hpp"
#include "karmanet/thread_model.hpp"

namespace karmanet {

inline constexpr const char* kUnkToken = "<unk>";

// Index 0 is the shared UNK slot; singletons and unseen types map there so
// UNK receives training signal.
class Vocabulary {
public:
    Vocabulary() : types_{kUnkToken} { index_.emplace(kUnkToken, 0); }

    explicit Vocabulary(std::vector<std::string> types) : types_(std::move(types)) {
        if (types_.empty() || types_[0] != kUnkToken)
            throw std::invalid_argument("vocabulary must start with the UNK token");
        for (std::size_t i = 0; i < types_.size(); ++i) index_.emplace(types_[i], i);
    }

    // keeps every type observed at least twice, in lexicographic order
    static Vocabulary build(const std::map<std::string, std::int64_t>& counts) {
        std::vector<std::string> types{kUnkToken};
        for (const auto& [type, n] : counts)
            if (n >= 2 && type != kUnkToken) types.push_back(type);
        return Vocabulary(std::move(types));
    }

    int id(const std::string& type) const {
        auto it = index_.find(type);
        return it == index_.end() ? 0 : static_cast<int>(it->second);
    }

    int size() const { return static_cast<int>(types_.size()); }
    const std::vector<std::string>& types() const { return types_; }

private:
    std::vector<std::string> types_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Pre-tokenization example: annotated sentences still as strings, label and
// raw features already attached.
struct RawExample {
    std::string comment_id;
    std::string thread_id;
    std::string subreddit;
    ContextFeatureVector features;  // raw filled; normalized filled later
    std::vector<Sentence> sentences;
    int label = 0;
};

// One labeled example per comment of every thread, in thread order.
// Empty sentences are dropped here.
inline std::vector<RawExample> make_raw_examples(
    const std::vector<Thread>& threads,
    const std::map<std::string, QuantizerThresholds>& quantizers) {
    std::vector<RawExample> out;
    for (const auto& t : threads) {
        auto it = quantizers.find(t.subreddit);
        if (it == quantizers.end())
            throw std::invalid_argument("no quantizer for subreddit '" + t.subreddit + "'");
        auto feats = extract_all(t);
        for (const auto& c : t.comments) {
            RawExample ex;
            ex.comment_id = c.id;
            ex.thread_id = t.thread_id;
            ex.subreddit = t.subreddit;
            ex.features = feats.at(c.id);
            for (const auto& s : c.sentences)
                if (!s.empty()) ex.sentences.push_back(s);
            ex.label = it->second.quantize(c.karma);
            out.push_back(std::move(ex));
        }
    }
    return out;
}

struct VocabularySet {
    Vocabulary word, pos, lemma;
};

inline VocabularySet build_vocabularies(const std::vector<RawExample>& fitting_set) {
    std::map<std::string, std::int64_t> wc, pc, lc;
    for (const auto& ex : fitting_set)
        for (const auto& s : ex.sentences)
            for (const auto& tok : s) {
                ++wc[tok.word];
                ++pc[tok.pos];
                ++lc[tok.lemma];
            }
    return {Vocabulary::build(wc), Vocabulary::build(pc), Vocabulary::build(lc)};
}

inline LabeledExample finalize_example(const RawExample& raw, const VocabularySet& vocabs,
                                       const Normalizer& normalizer) {
    LabeledExample ex;
    ex.comment_id = raw.comment_id;
    ex.thread_id = raw.thread_id;
    ex.subreddit = raw.subreddit;
    ex.features = apply(normalizer, raw.features);
    ex.label = raw.label;
    for (const auto& s : raw.sentences) {
        std::vector<TokenIds> ids;
        ids.reserve(s.size());
        for (const auto& tok : s)
            ids.push_back({vocabs.word.id(tok.word), vocabs.pos.id(tok.pos),
                           vocabs.lemma.id(tok.lemma)});
        ex.sentences.push_back(std::move(ids));
    }
    return ex;
}

// Everything the trainer and evaluator consume: vocabularies, the fitted
// normalizer, per-subreddit thresholds, and the three example splits
// (train/val already subsampled; test untouched).
struct DatasetBundle {
    VocabularySet vocabs;
    Normalizer normalizer;
    std::map<std::string, QuantizerThresholds> quantizers;
    std::vector<LabeledExample> train, val, test;
    std::map<std::string, int> partitions;  // thread id -> 0..9
    std::uint64_t seed = 0;
    int pivot_level = 4;

    // train/val/test must not share a single comment
    void assert_no_leakage() const {
        std::set<std::pair<std::string, std::string>> seen;
        for (const auto* split : {&train, &val, &test})
            for (const auto& ex : *split)
                if (!seen.emplace(ex.thread_id, ex.comment_id).second)
                    throw std::logic_error("comment " + ex.thread_id + "/" + ex.comment_id +
                                           " appears in more than one split");
    }
};

namespace detail {

inline nlohmann::json example_to_json(const LabeledExample& ex) {
    nlohmann::json sents = nlohmann::json::array();
    for (const auto& s : ex.sentences) {
        nlohmann::json sent = nlohmann::json::array();
        for (const auto& t : s) sent.push_back({t.word, t.pos, t.lemma});
        sents.push_back(std::move(sent));
    }
    nlohmann::json x = nlohmann::json::array();
    for (double v : ex.features.raw) x.push_back(v);
    return nlohmann::json{{"id", ex.comment_id}, {"thread", ex.thread_id},
                          {"sub", ex.subreddit}, {"label", ex.label},
                          {"x", std::move(x)},   {"sents", std::move(sents)}};
}

inline LabeledExample example_from_json(const nlohmann::json& j, const Normalizer& n) {
    LabeledExample ex;
    ex.comment_id = j.at("id").get<std::string>();
    ex.thread_id = j.at("thread").get<std::string>();
    ex.subreddit = j.at("sub").get<std::string>();
    ex.label = j.at("label").get<int>();
    const auto& x = j.at("x");
    for (int i = 0; i < kNumContextFeatures; ++i) ex.features.raw[i] = x.at(i).get<double>();
    ex.features = apply(n, ex.features);
    for (const auto& js : j.at("sents")) {
        std::vector<TokenIds> sent;
        for (const auto& jt : js)
            sent.push_back({jt.at(0).get<int>(), jt.at(1).get<int>(), jt.at(2).get<int>()});
        ex.sentences.push_back(std::move(sent));
    }
    return ex;
}

}  // namespace detail

inline nlohmann::json bundle_to_json(const DatasetBundle& b) {
    nlohmann::json j;
    j["version"] = 1;
    j["seed"] = b.seed;
    j["pivot_level"] = b.pivot_level;
    j["vocab"] = {{"word", b.vocabs.word.types()},
                  {"pos", b.vocabs.pos.types()},
                  {"lemma", b.vocabs.lemma.types()}};
    j["normalizer"] = {{"mean", b.normalizer.mean},
                       {"std", b.normalizer.std},
                       {"std_kind", "population"}};
    nlohmann::json quants = nlohmann::json::array();
    for (const auto& [sub, q] : b.quantizers)
        quants.push_back({{"subreddit", sub}, {"cuts", q.cuts}});
    j["quantizers"] = std::move(quants);
    j["partitions"] = b.partitions;
    for (const auto& [name, split] :
         std::initializer_list<std::pair<const char*, const std::vector<LabeledExample>*>>{
             {"train", &b.train}, {"val", &b.val}, {"test", &b.test}}) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& ex : *split) arr.push_back(detail::example_to_json(ex));
        j["splits"][name] = std::move(arr);
    }
    return j;
}

inline DatasetBundle bundle_from_json(const nlohmann::json& j) {
    if (j.value("version", 0) != 1)
        throw std::invalid_argument("unsupported dataset bundle version");
    DatasetBundle b;
    b.seed = j.value("seed", 0ULL);
    b.pivot_level = j.value("pivot_level", 4);
    b.vocabs.word = Vocabulary(j.at("vocab").at("word").get<std::vector<std::string>>());
    b.vocabs.pos = Vocabulary(j.at("vocab").at("pos").get<std::vector<std::string>>());
    b.vocabs.lemma = Vocabulary(j.at("vocab").at("lemma").get<std::vector<std::string>>());
    const auto& n = j.at("normalizer");
    for (int i = 0; i < kNumContextFeatures; ++i) {
        b.normalizer.mean[i] = n.at("mean").at(i).get<double>();
        b.normalizer.std[i] = n.at("std").at(i).get<double>();
    }
    for (const auto& q : j.at("quantizers")) {
        QuantizerThresholds qt;
        qt.cuts = q.at("cuts").get<std::vector<double>>();
        b.quantizers.emplace(q.at("subreddit").get<std::string>(), std::move(qt));
    }
    if (j.contains("partitions"))
        b.partitions = j.at("partitions").get<std::map<std::string, int>>();
    for (const auto& [name, split] :
         std::initializer_list<std::pair<const char*, std::vector<LabeledExample>*>>{
             {"train", &b.train}, {"val", &b.val}, {"test", &b.test}})
        for (const auto& je : j.at("splits").at(name))
            split->push_back(detail::example_from_json(je, b.normalizer));
    b.assert_no_leakage();
    return b;
}

inline void save_bundle(const DatasetBundle& b, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << bundle_to_json(b).dump();
}

inline DatasetBundle load_bundle(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("bundle '" + path + "': malformed JSON: " + e.what());
    }
    return bundle_from_json(j);
}

// fit per-subreddit thresholds over a whole corpus (pre-subsampling)
inline std::map<std::string, QuantizerThresholds> fit_quantizers(
    const std::vector<Thread>& threads) {
    std::map<std::string, std::vector<std::int64_t>> karma;
    for (const auto& t : threads)
        for (const auto& c : t.comments) karma[t.subreddit].push_back(c.karma);
    std::map<std::string, QuantizerThresholds> out;
    for (const auto& [sub, scores] : karma) out.emplace(sub, fit_quantizer(scores));
    return out;
}

}  // namespace karmanet
