#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "karmanet/rng.hpp"
#include "karmanet/thread_model.hpp"

namespace karmanet {

enum class TextSignal { kNone, kGlobal, kContextConditional };

inline std::string text_signal_name(TextSignal s) {
    switch (s) {
        case TextSignal::kNone: return "none";
        case TextSignal::kGlobal: return "global";
        case TextSignal::kContextConditional: return "context_conditional";
    }
    return "none";
}

inline TextSignal text_signal_from_name(const std::string& s) {
    if (s == "none") return TextSignal::kNone;
    if (s == "global") return TextSignal::kGlobal;
    if (s == "context_conditional") return TextSignal::kContextConditional;
    throw std::invalid_argument("unknown text signal mode '" + s + "'");
}

// Synthetic corpus generator. Trees grow by sequential attachment biased
// towards comments that already have replies; karma is lognormal in an
// earliness score plus the final reply count, which plants the regularities
// the model is supposed to pick up (early, high-activity comments earn more
// endorsement). Text can carry no signal, a global karma signal, or a signal
// confined to low-activity regions of the tree.
struct GenConfig {
    std::uint64_t seed = 1;
    int threads = 100;
    double mean_comments = 30.0;     // mean comments per thread
    double branching_bias = 0.8;     // preferential-attachment strength
    double karma_alpha = 0.8;        // weight on earliness
    double karma_beta = 0.55;        // weight on final reply count
    double karma_noise = 0.7;        // lognormal noise scale
    TextSignal text_signal = TextSignal::kContextConditional;
    int level_vocab_size = 24;       // indicative words per proxy level
    int neutral_vocab_size = 120;
    int authors = 40;
    double op_reply_prob = 0.15;     // chance a comment is by the thread starter
    double mean_gap_hours = 0.4;     // mean arrival gap
    int low_activity_max_subtree = 2;
    int min_sentences = 1, max_sentences = 3;
    int min_tokens = 4, max_tokens = 9;

    void validate() const {
        if (threads <= 0 || mean_comments < 1.0 || authors <= 0)
            throw std::invalid_argument("gen config: counts must be positive");
        if (karma_noise < 0.0) throw std::invalid_argument("gen config: noise scale must be >= 0");
        if (level_vocab_size <= 0 || neutral_vocab_size <= 0)
            throw std::invalid_argument("gen config: vocab sizes must be positive");
        if (mean_gap_hours <= 0.0) throw std::invalid_argument("gen config: gap must be positive");
    }
};

inline void to_json(nlohmann::json& j, const GenConfig& c) {
    j = nlohmann::json{{"seed", c.seed},
                       {"threads", c.threads},
                       {"mean_comments", c.mean_comments},
                       {"branching_bias", c.branching_bias},
                       {"karma_alpha", c.karma_alpha},
                       {"karma_beta", c.karma_beta},
                       {"karma_noise", c.karma_noise},
                       {"text_signal", text_signal_name(c.text_signal)},
                       {"level_vocab_size", c.level_vocab_size},
                       {"neutral_vocab_size", c.neutral_vocab_size},
                       {"authors", c.authors},
                       {"op_reply_prob", c.op_reply_prob},
                       {"mean_gap_hours", c.mean_gap_hours},
                       {"low_activity_max_subtree", c.low_activity_max_subtree},
                       {"min_sentences", c.min_sentences},
                       {"max_sentences", c.max_sentences},
                       {"min_tokens", c.min_tokens},
                       {"max_tokens", c.max_tokens}};
}

inline void from_json(const nlohmann::json& j, GenConfig& c) {
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.mean_comments = j.value("mean_comments", c.mean_comments);
    c.branching_bias = j.value("branching_bias", c.branching_bias);
    c.karma_alpha = j.value("karma_alpha", c.karma_alpha);
    c.karma_beta = j.value("karma_beta", c.karma_beta);
    c.karma_noise = j.value("karma_noise", c.karma_noise);
    if (j.contains("text_signal"))
        c.text_signal = text_signal_from_name(j.at("text_signal").get<std::string>());
    c.level_vocab_size = j.value("level_vocab_size", c.level_vocab_size);
    c.neutral_vocab_size = j.value("neutral_vocab_size", c.neutral_vocab_size);
    c.authors = j.value("authors", c.authors);
    c.op_reply_prob = j.value("op_reply_prob", c.op_reply_prob);
    c.mean_gap_hours = j.value("mean_gap_hours", c.mean_gap_hours);
    c.low_activity_max_subtree = j.value("low_activity_max_subtree", c.low_activity_max_subtree);
    c.min_sentences = j.value("min_sentences", c.min_sentences);
    c.max_sentences = j.value("max_sentences", c.max_sentences);
    c.min_tokens = j.value("min_tokens", c.min_tokens);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
}

namespace detail {

inline const char* kPosTags[7] = {"NN", "VB", "JJ", "RB", "DT", "IN", "PRP"};

inline std::string synth_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

// stable per-type POS so annotation looks consistent across the corpus
inline const char* pos_for_word(const std::string& w) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : w) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
    return kPosTags[h % 7];
}

inline AnnotatedToken make_token(std::string word) {
    AnnotatedToken t;
    t.pos = pos_for_word(word);
    t.lemma = word;
    t.word = std::move(word);
    return t;
}

// proxy endorsement level used only to pick the indicative vocabulary;
// correlates with the head-tail level fitted later on the whole corpus
inline int proxy_level(std::int64_t karma) {
    int l = 0;
    while (karma >= 2 && l < 7) {
        karma >>= 1;
        ++l;
    }
    return l;
}

}  // namespace detail

inline std::vector<Thread> generate(const GenConfig& cfg) {
    cfg.validate();
    std::vector<Thread> corpus;
    corpus.reserve(static_cast<std::size_t>(cfg.threads));
    Rng master(cfg.seed);
    for (int ti = 0; ti < cfg.threads; ++ti) {
        Rng rng = master.fork(static_cast<std::uint64_t>(ti));
        Thread th;
        th.thread_id = "t" + detail::synth_pad(ti, 5);
        th.subreddit = "synth";
        th.root_author = "u" + detail::synth_pad(rng.uniform_int(0, cfg.authors - 1), 3);

        int n = 1 + rng.poisson(std::max(0.0, cfg.mean_comments - 1.0));
        std::vector<int> parent(n, -1);        // -1 = root post
        std::vector<int> child_count(n + 1, 0);  // slot n = root post
        std::vector<double> arrival_h(n, 0.0);
        double t = 0.0;
        for (int i = 0; i < n; ++i) {
            t += rng.exponential(cfg.mean_gap_hours);
            arrival_h[i] = t;
            // candidates: root post plus all earlier comments
            double total = 1.0 + cfg.branching_bias * child_count[n];
            for (int j = 0; j < i; ++j) total += 1.0 + cfg.branching_bias * child_count[j];
            double pick = rng.uniform01() * total;
            int chosen = -1;  // root
            double acc = 1.0 + cfg.branching_bias * child_count[n];
            if (pick >= acc) {
                for (int j = 0; j < i; ++j) {
                    acc += 1.0 + cfg.branching_bias * child_count[j];
                    if (pick < acc) {
                        chosen = j;
                        break;
                    }
                }
                if (pick >= acc) chosen = i - 1;  // float edge
            }
            parent[i] = chosen;
            ++child_count[chosen >= 0 ? chosen : n];
        }

        // karma from earliness rank, final reply count, and noise
        std::vector<std::int64_t> karma(n);
        for (int i = 0; i < n; ++i) {
            double earliness = 1.0 - static_cast<double>(i) / static_cast<double>(n);
            double noise = cfg.karma_noise > 0.0 ? cfg.karma_noise * rng.normal() : 0.0;
            double v = std::exp(cfg.karma_alpha * earliness +
                                cfg.karma_beta * static_cast<double>(child_count[i]) + noise);
            karma[i] = std::clamp<std::int64_t>(std::llround(v), 1, 1000000000);
        }

        // final subtree sizes, bottom-up over arrival order (children arrive later)
        std::vector<int> subtree(n, 1);
        for (int i = n - 1; i >= 0; --i)
            if (parent[i] >= 0) subtree[parent[i]] += subtree[i];

        th.comments.resize(n);
        for (int i = 0; i < n; ++i) {
            Comment& c = th.comments[i];
            c.id = th.thread_id + "c" + detail::synth_pad(i, 4);
            c.parent_id = parent[i] >= 0 ? th.comments[parent[i]].id : std::string();
            c.author = rng.uniform01() < cfg.op_reply_prob
                           ? th.root_author
                           : "u" + detail::synth_pad(rng.uniform_int(0, cfg.authors - 1), 3);
            c.time_s = arrival_h[i] * 3600.0;
            c.karma = karma[i];

            // token source: indicative vocabulary of the proxy level, a random
            // level's vocabulary (level independent), or the neutral pool
            bool low_activity = subtree[i] <= cfg.low_activity_max_subtree;
            int n_sent = rng.uniform_int(cfg.min_sentences, cfg.max_sentences);
            for (int s = 0; s < n_sent; ++s) {
                Sentence sent;
                int n_tok = rng.uniform_int(cfg.min_tokens, cfg.max_tokens);
                for (int k = 0; k < n_tok; ++k) {
                    std::string word;
                    bool indicative = false;
                    int level = 0;
                    switch (cfg.text_signal) {
                        case TextSignal::kNone:
                            indicative = false;
                            break;
                        case TextSignal::kGlobal:
                            indicative = true;
                            level = detail::proxy_level(c.karma);
                            break;
                        case TextSignal::kContextConditional:
                            indicative = true;
                            level = low_activity ? detail::proxy_level(c.karma)
                                                 : rng.uniform_int(0, 7);
                            break;
                    }
                    if (indicative)
                        word = "k" + std::to_string(level) + "v" +
                               std::to_string(rng.uniform_int(0, cfg.level_vocab_size - 1));
                    else
                        word = "n" + std::to_string(rng.uniform_int(0, cfg.neutral_vocab_size - 1));
                    sent.push_back(detail::make_token(std::move(word)));
                }
                c.sentences.push_back(std::move(sent));
            }
        }
        corpus.push_back(std::move(th));
    }
    return corpus;
}

struct CorpusSummary {
    int threads = 0;
    std::int64_t comments = 0;
    double comments_per_thread_mean = 0.0;
    std::int64_t karma_p50 = 0, karma_p90 = 0, karma_p99 = 0, karma_max = 0;
    double depth_mean = 0.0;
    int depth_max = 0;
    double children_mean = 0.0;
};

inline void to_json(nlohmann::json& j, const CorpusSummary& s) {
    j = nlohmann::json{{"threads", s.threads},
                       {"comments", s.comments},
                       {"comments_per_thread_mean", s.comments_per_thread_mean},
                       {"karma_p50", s.karma_p50},
                       {"karma_p90", s.karma_p90},
                       {"karma_p99", s.karma_p99},
                       {"karma_max", s.karma_max},
                       {"depth_mean", s.depth_mean},
                       {"depth_max", s.depth_max},
                       {"children_mean", s.children_mean}};
}

inline std::int64_t quantile_nearest_rank(std::vector<std::int64_t>& v, double q) {
    // nearest-rank on a scratch copy; ceil(q*n)-th order statistic
    std::size_t idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    if (idx > 0) --idx;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
    return v[idx];
}

inline CorpusSummary describe(const std::vector<Thread>& corpus) {
    CorpusSummary s;
    s.threads = static_cast<int>(corpus.size());
    std::vector<std::int64_t> karma;
    double depth_sum = 0.0;
    std::int64_t children_sum = 0;
    for (const auto& th : corpus) {
        s.comments += static_cast<std::int64_t>(th.comments.size());
        auto stats = subtree_stats(th);
        for (const auto& c : th.comments) {
            karma.push_back(c.karma);
            const auto& st = stats.at(c.id);
            depth_sum += st.depth;
            children_sum += st.n_children;
            s.depth_max = std::max(s.depth_max, st.depth);
        }
    }
    if (s.threads > 0)
        s.comments_per_thread_mean =
            static_cast<double>(s.comments) / static_cast<double>(s.threads);
    if (!karma.empty()) {
        s.karma_p50 = quantile_nearest_rank(karma, 0.50);
        s.karma_p90 = quantile_nearest_rank(karma, 0.90);
        s.karma_p99 = quantile_nearest_rank(karma, 0.99);
        s.karma_max = *std::max_element(karma.begin(), karma.end());
        s.depth_mean = depth_sum / static_cast<double>(karma.size());
        s.children_mean =
            static_cast<double>(children_sum) / static_cast<double>(karma.size());
    }
    return s;
}

}  // namespace karmanet
