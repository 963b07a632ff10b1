#include <catch2/catch_amalgamated.hpp>

#include "karmanet/rng.hpp"
#include "karmanet/synthgen.hpp"
#include "karmanet/thread_model.hpp"

using namespace karmanet;

namespace {

Comment mk(const std::string& id, const std::string& parent, double time_s, int karma = 1) {
    Comment c;
    c.id = id;
    c.parent_id = parent;
    c.author = "user";
    c.time_s = time_s;
    c.karma = karma;
    return c;
}

}  // namespace

TEST_CASE("parse accepts a minimal one-comment thread") {
    std::string line =
        R"({"thread_id":"t1","subreddit":"s","root_author":"op","comments":[)"
        R"({"id":"c1","parent_id":"","author":"a","time_s":10.0,"karma":3,)"
        R"("sentences":[[{"w":"hi","l":"hi","p":"UH"}]]}]})";
    auto threads = parse_threads_string(line + "\n");
    REQUIRE(threads.size() == 1);
    CHECK(threads[0].comments.size() == 1);
    CHECK(threads[0].comments[0].karma == 3);
    CHECK(threads[0].comments[0].sentences[0][0].word == "hi");
}

TEST_CASE("parse reports malformed lines with their line number") {
    std::string text = R"({"thread_id":"t1","subreddit":"s","root_author":"o","comments":[]})";
    text += "\nnot json at all\n";
    try {
        parse_threads_string(text);
        FAIL("expected parse error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("parse rejects unresolved parents and missing karma") {
    std::string orphan =
        R"({"thread_id":"t1","subreddit":"s","root_author":"o","comments":[)"
        R"({"id":"c1","parent_id":"ghost","author":"a","time_s":1.0,"karma":1,"sentences":[]}]})";
    try {
        parse_threads_string(orphan + "\n");
        FAIL("expected unresolved parent");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("unresolved parent") != std::string::npos);
    }

    std::string no_karma =
        R"({"thread_id":"t1","subreddit":"s","root_author":"o","comments":[)"
        R"({"id":"c1","parent_id":"","author":"a","time_s":1.0,"sentences":[]}]})";
    CHECK_THROWS_AS(parse_threads_string(no_karma + "\n"), std::invalid_argument);
}

TEST_CASE("validate_thread catches the spec'd violations") {
    Thread t;
    t.thread_id = "t";
    CHECK(!validate_thread(t));  // empty comment list is fine

    t.comments = {mk("a", "b", 1.0), mk("b", "a", 2.0)};
    auto v = validate_thread(t);
    REQUIRE(v);
    CHECK(v->find("cycle") != std::string::npos);

    t.comments = {mk("a", "", 1.0), mk("a", "", 2.0)};
    v = validate_thread(t);
    REQUIRE(v);
    CHECK(v->find("duplicate id") != std::string::npos);

    t.comments = {mk("a", "", 5.0), mk("b", "a", 1.0)};
    v = validate_thread(t);
    REQUIRE(v);
    CHECK(v->find("precedes") != std::string::npos);
}

TEST_CASE("subtree stats on the worked example") {
    Thread t;
    t.thread_id = "t";
    t.comments = {mk("A", "", 1.0), mk("B", "A", 2.0), mk("C", "A", 3.0)};
    auto st = subtree_stats(t);
    CHECK(st.at("A").n_children == 2);
    CHECK(st.at("A").subtree_size == 3);
    CHECK(st.at("A").subtree_height == 1);
    CHECK(st.at("A").depth == 1);
    CHECK(st.at("B").n_children == 0);
    CHECK(st.at("B").subtree_size == 1);
    CHECK(st.at("B").subtree_height == 0);
    CHECK(st.at("B").depth == 2);
}

namespace {

// independent recursive oracle for sizes and heights
void oracle_walk(const Thread& t, const std::vector<std::vector<int>>& children, int u,
                 int depth, std::vector<int>& size, std::vector<int>& height,
                 std::vector<int>& dep) {
    dep[u] = depth;
    size[u] = 1;
    height[u] = 0;
    for (int c : children[u]) {
        oracle_walk(t, children, c, depth + 1, size, height, dep);
        size[u] += size[c];
        height[u] = std::max(height[u], height[c] + 1);
    }
}

}  // namespace

TEST_CASE("subtree stats match a recursive oracle on a random 200-node tree") {
    Rng rng(99);
    Thread t;
    t.thread_id = "t";
    for (int i = 0; i < 200; ++i) {
        std::string parent = i == 0 ? "" : "c" + std::to_string(rng.uniform_int(0, i - 1));
        if (i > 0 && rng.uniform01() < 0.3) parent = "";  // extra top-level comments
        t.comments.push_back(mk("c" + std::to_string(i), parent, static_cast<double>(i)));
    }
    REQUIRE(!validate_thread(t));

    ThreadIndex ix = index_thread(t);
    std::vector<int> size(200), height(200), dep(200);
    for (int r : ix.root_children) oracle_walk(t, ix.children, r, 1, size, height, dep);

    auto st = subtree_stats(t);
    int root_sum = 0;
    for (int i = 0; i < 200; ++i) {
        const auto& s = st.at(t.comments[i].id);
        CHECK(s.subtree_size == size[i]);
        CHECK(s.subtree_height == height[i]);
        CHECK(s.depth == dep[i]);
        CHECK(s.n_children == static_cast<int>(ix.children[i].size()));
    }
    for (int r : ix.root_children) root_sum += st.at(t.comments[r].id).subtree_size;
    CHECK(root_sum == 200);  // direct children of root cover the thread
}

TEST_CASE("parse and serialize round-trip on a synthetic corpus") {
    GenConfig cfg;
    cfg.seed = 5;
    cfg.threads = 100;
    cfg.mean_comments = 8.0;
    auto corpus = generate(cfg);
    REQUIRE(corpus.size() == 100);

    std::string text = serialize_threads(corpus);
    auto parsed = parse_threads_string(text);
    REQUIRE(parsed.size() == corpus.size());
    CHECK(parsed == corpus);
    CHECK(serialize_threads(parsed) == text);  // identity on canonical form
}
