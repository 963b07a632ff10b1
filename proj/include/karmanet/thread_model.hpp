#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace karmanet {

struct AnnotatedToken {
    std::string word;
    std::string lemma;  // may be empty (fallback annotation)
    std::string pos;    // may be empty

    bool operator==(const AnnotatedToken&) const = default;
};

using Sentence = std::vector<AnnotatedToken>;

struct Comment {
    std::string id;
    std::string parent_id;  // "" means the root post
    std::string author;
    double time_s = 0.0;    // seconds since the root post
    std::int64_t karma = 0;
    std::vector<Sentence> sentences;

    bool operator==(const Comment&) const = default;
};

struct Thread {
    std::string thread_id;
    std::string subreddit;
    std::string root_author;
    std::vector<Comment> comments;

    bool operator==(const Thread&) const = default;
};

struct SubtreeStats {
    int n_children = 0;
    int subtree_size = 1;
    int subtree_height = 0;  // leaf = 0
    int depth = 0;           // direct reply to root = 1
};

// Returns the index of each comment's direct children, with -1 keyed children
// of the root post accessible via root_children.
struct ThreadIndex {
    std::unordered_map<std::string, int> by_id;
    std::vector<std::vector<int>> children;  // per comment
    std::vector<int> root_children;
    std::vector<int> parent;  // -1 = root post
};

inline ThreadIndex index_thread(const Thread& t) {
    ThreadIndex ix;
    ix.children.resize(t.comments.size());
    ix.parent.assign(t.comments.size(), -1);
    for (std::size_t i = 0; i < t.comments.size(); ++i)
        ix.by_id.emplace(t.comments[i].id, static_cast<int>(i));
    for (std::size_t i = 0; i < t.comments.size(); ++i) {
        const auto& c = t.comments[i];
        if (c.parent_id.empty()) {
            ix.root_children.push_back(static_cast<int>(i));
        } else {
            auto it = ix.by_id.find(c.parent_id);
            if (it == ix.by_id.end())
                throw std::invalid_argument("unresolved parent '" + c.parent_id + "' in thread " +
                                            t.thread_id);
            ix.parent[i] = it->second;
            ix.children[it->second].push_back(static_cast<int>(i));
        }
    }
    return ix;
}

// ok iff the Thread invariants hold; otherwise a short description of the
// first violation found.
inline std::optional<std::string> validate_thread(const Thread& t) {
    std::unordered_map<std::string, int> by_id;
    for (std::size_t i = 0; i < t.comments.size(); ++i) {
        const auto& c = t.comments[i];
        if (c.id.empty()) return "empty comment id";
        if (!by_id.emplace(c.id, static_cast<int>(i)).second)
            return "duplicate id '" + c.id + "'";
    }
    for (const auto& c : t.comments) {
        if (c.time_s < 0.0) return "negative time_s on comment '" + c.id + "'";
        if (!c.parent_id.empty() && !by_id.count(c.parent_id))
            return "unresolved parent '" + c.parent_id + "' of comment '" + c.id + "'";
    }
    // walk each comment towards the root; a repeat visit means a cycle
    for (std::size_t i = 0; i < t.comments.size(); ++i) {
        std::size_t steps = 0;
        int cur = static_cast<int>(i);
        while (cur >= 0) {
            const auto& c = t.comments[cur];
            if (++steps > t.comments.size()) return "cycle involving comment '" + c.id + "'";
            cur = c.parent_id.empty() ? -1 : by_id.at(c.parent_id);
        }
    }
    for (const auto& c : t.comments) {
        if (!c.parent_id.empty()) {
            const auto& p = t.comments[by_id.at(c.parent_id)];
            if (c.time_s < p.time_s)
                return "comment '" + c.id + "' precedes its parent";
        }
    }
    return std::nullopt;
}

// Per-comment structural statistics, computed iteratively so deep reply
// chains cannot overflow the stack.
inline std::map<std::string, SubtreeStats> subtree_stats(const Thread& t) {
    ThreadIndex ix = index_thread(t);
    const int n = static_cast<int>(t.comments.size());
    std::vector<SubtreeStats> st(n);

    // depth, top-down in BFS order from the root's children
    std::vector<int> order;
    order.reserve(n);
    for (int c : ix.root_children) {
        st[c].depth = 1;
        order.push_back(c);
    }
    for (std::size_t q = 0; q < order.size(); ++q) {
        int u = order[q];
        for (int c : ix.children[u]) {
            st[c].depth = st[u].depth + 1;
            order.push_back(c);
        }
    }

    // size and height, bottom-up in reverse BFS order
    for (int i = 0; i < n; ++i) {
        st[i].n_children = static_cast<int>(ix.children[i].size());
        st[i].subtree_size = 1;
        st[i].subtree_height = 0;
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int u = *it;
        for (int c : ix.children[u]) {
            st[u].subtree_size += st[c].subtree_size;
            st[u].subtree_height = std::max(st[u].subtree_height, st[c].subtree_height + 1);
        }
    }

    std::map<std::string, SubtreeStats> out;
    for (int i = 0; i < n; ++i) out.emplace(t.comments[i].id, st[i]);
    return out;
}

namespace detail {

inline nlohmann::json token_to_json(const AnnotatedToken& tok) {
    return nlohmann::json{{"w", tok.word}, {"l", tok.lemma}, {"p", tok.pos}};
}

inline nlohmann::json comment_to_json(const Comment& c) {
    nlohmann::json sents = nlohmann::json::array();
    for (const auto& s : c.sentences) {
        nlohmann::json sent = nlohmann::json::array();
        for (const auto& tok : s) sent.push_back(token_to_json(tok));
        sents.push_back(std::move(sent));
    }
    return nlohmann::json{{"id", c.id},         {"parent_id", c.parent_id},
                          {"author", c.author}, {"time_s", c.time_s},
                          {"karma", c.karma},   {"sentences", std::move(sents)}};
}

}  // namespace detail

inline nlohmann::json thread_to_json(const Thread& t) {
    nlohmann::json comments = nlohmann::json::array();
    for (const auto& c : t.comments) comments.push_back(detail::comment_to_json(c));
    return nlohmann::json{{"thread_id", t.thread_id},
                          {"subreddit", t.subreddit},
                          {"root_author", t.root_author},
                          {"comments", std::move(comments)}};
}

inline Thread thread_from_json(const nlohmann::json& j) {
    Thread t;
    t.thread_id = j.at("thread_id").get<std::string>();
    t.subreddit = j.at("subreddit").get<std::string>();
    t.root_author = j.at("root_author").get<std::string>();
    for (const auto& jc : j.at("comments")) {
        Comment c;
        c.id = jc.at("id").get<std::string>();
        c.parent_id = jc.at("parent_id").get<std::string>();
        c.author = jc.at("author").get<std::string>();
        c.time_s = jc.at("time_s").get<double>();
        if (!jc.contains("karma"))
            throw std::invalid_argument("comment '" + c.id + "' has no karma field");
        c.karma = jc.at("karma").get<std::int64_t>();
        for (const auto& js : jc.at("sentences")) {
            Sentence s;
            for (const auto& jt : js) {
                AnnotatedToken tok;
                tok.word = jt.at("w").get<std::string>();
                tok.lemma = jt.value("l", std::string());
                tok.pos = jt.value("p", std::string());
                if (tok.word.empty()) throw std::invalid_argument("empty token word");
                s.push_back(std::move(tok));
            }
            c.sentences.push_back(std::move(s));
        }
        t.comments.push_back(std::move(c));
    }
    return t;
}

// Canonical one-object-per-line serialization (sorted keys, UTF-8).
inline std::string serialize_threads(const std::vector<Thread>& threads) {
    std::string out;
    for (const auto& t : threads) {
        out += thread_to_json(t).dump();
        out += '\n';
    }
    return out;
}

inline std::vector<Thread> parse_threads_string(const std::string& text) {
    std::vector<Thread> threads;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("line " + std::to_string(line_no) +
                                        ": malformed JSON: " + e.what());
        }
        Thread t;
        try {
            t = thread_from_json(j);
        } catch (const std::exception& e) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (auto violation = validate_thread(t))
            throw std::invalid_argument("thread '" + t.thread_id + "': " + *violation);
        threads.push_back(std::move(t));
    }
    return threads;
}

inline std::vector<Thread> parse_threads(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_threads_string(ss.str());
}

inline void write_threads(const std::vector<Thread>& threads, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << serialize_threads(threads);
}

}  // namespace karmanet
