#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "karmanet/dataset.hpp"
#include "karmanet/model.hpp"

namespace karmanet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian");

inline constexpr char kCheckpointMagic[8] = {'K', 'N', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr int kCheckpointVersion = 1;

// Container layout: 8-byte magic, little-endian u64 header length, JSON
// header, then the parameter payload as name-ordered flat arrays of
// little-endian 64-bit reals. The header carries the model config, the
// vocabularies, the normalizer (population std), the per-subreddit
// quantizer cuts, and the parameter directory (name, dims, byte offset).
template <typename Real>
void save_checkpoint(const std::string& path, const ModelParams<Real>& params,
                     const VocabularySet& vocabs, const Normalizer& normalizer,
                     const std::map<std::string, QuantizerThresholds>& quantizers) {
    std::vector<const Param<Real>*> ordered;
    for (const auto* p : params.store.slots()) ordered.push_back(p);
    std::sort(ordered.begin(), ordered.end(),
              [](const Param<Real>* a, const Param<Real>* b) { return a->name < b->name; });

    nlohmann::json dir = nlohmann::json::array();
    std::int64_t offset = 0;
    for (const auto* p : ordered) {
        dir.push_back({{"name", p->name},
                       {"dims", {p->value.rows, p->value.cols}},
                       {"offset", offset}});
        offset += static_cast<std::int64_t>(p->value.size()) * 8;
    }

    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["config"] = params.cfg;
    header["vocab"] = {{"word", vocabs.word.types()},
                       {"pos", vocabs.pos.types()},
                       {"lemma", vocabs.lemma.types()}};
    header["normalizer"] = {
        {"mean", normalizer.mean}, {"std", normalizer.std}, {"std_kind", "population"}};
    nlohmann::json quants = nlohmann::json::array();
    for (const auto& [sub, q] : quantizers)
        quants.push_back({{"subreddit", sub}, {"cuts", q.cuts}});
    header["quantizers"] = std::move(quants);
    header["params"] = std::move(dir);

    std::string head = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(kCheckpointMagic, 8);
    std::uint64_t len = head.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    std::vector<double> buf;
    for (const auto* p : ordered) {
        buf.assign(p->value.a.begin(), p->value.a.end());
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * 8));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

template <typename Real>
struct Checkpoint {
    std::unique_ptr<ModelParams<Real>> model;
    VocabularySet vocabs;
    Normalizer normalizer;
    std::map<std::string, QuantizerThresholds> quantizers;
};

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::invalid_argument("'" + path + "' is not a checkpoint file");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    std::string head(len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::invalid_argument("truncated checkpoint header");

    nlohmann::json header = nlohmann::json::parse(head);
    if (header.value("version", 0) != kCheckpointVersion)
        throw std::invalid_argument("unsupported checkpoint version");

    Checkpoint<Real> ck;
    ModelConfig cfg = header.at("config").get<ModelConfig>();
    ck.model = std::make_unique<ModelParams<Real>>(cfg);
    ck.vocabs.word = Vocabulary(header.at("vocab").at("word").get<std::vector<std::string>>());
    ck.vocabs.pos = Vocabulary(header.at("vocab").at("pos").get<std::vector<std::string>>());
    ck.vocabs.lemma = Vocabulary(header.at("vocab").at("lemma").get<std::vector<std::string>>());
    const auto& n = header.at("normalizer");
    for (int i = 0; i < kNumContextFeatures; ++i) {
        ck.normalizer.mean[i] = n.at("mean").at(i).get<double>();
        ck.normalizer.std[i] = n.at("std").at(i).get<double>();
    }
    for (const auto& q : header.at("quantizers")) {
        QuantizerThresholds qt;
        qt.cuts = q.at("cuts").get<std::vector<double>>();
        ck.quantizers.emplace(q.at("subreddit").get<std::string>(), std::move(qt));
    }

    std::size_t loaded = 0;
    for (const auto& entry : header.at("params")) {
        std::string name = entry.at("name").get<std::string>();
        Param<Real>* slot = ck.model->store.find(name);
        if (!slot) throw std::invalid_argument("checkpoint parameter '" + name +
                                               "' does not exist under this config");
        int rows = entry.at("dims").at(0).get<int>();
        int cols = entry.at("dims").at(1).get<int>();
        if (rows != slot->value.rows || cols != slot->value.cols)
            throw std::invalid_argument("checkpoint parameter '" + name + "' has wrong shape");
        std::vector<double> buf(static_cast<std::size_t>(slot->value.size()));
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * 8));
        if (!in) throw std::invalid_argument("truncated checkpoint payload at '" + name + "'");
        for (std::size_t i = 0; i < buf.size(); ++i)
            slot->value.a[i] = static_cast<Real>(buf[i]);
        ++loaded;
    }
    if (loaded != ck.model->store.slots().size())
        throw std::invalid_argument("checkpoint is missing parameters for this config");
    return ck;
}

}  // namespace karmanet
