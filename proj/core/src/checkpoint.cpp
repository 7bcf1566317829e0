#include "ppap/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ppap {

namespace {

constexpr char kMagic[8] = {'P', 'P', 'A', 'P', 'C', 'K', 'P', '1'};

void write_u64(std::ostream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
void write_str(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_str(std::istream& in) {
    const uint64_t n = read_u64(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

std::string vocab_to_json(const KeypointVocab& v) {
    nlohmann::json j;
    j["names"] = v.names;
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [a, b] : v.flip_pairs) pairs.push_back({a, b});
    j["flip_pairs"] = pairs;
    return j.dump();
}

KeypointVocab vocab_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    std::vector<std::pair<int, int>> pairs;
    for (const auto& p : j["flip_pairs"]) pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    return KeypointVocab::from_names(j["names"].get<std::vector<std::string>>(), std::move(pairs));
}

}  // namespace

void save_checkpoint(const std::string& path, const PpapModel& model, const TrainConfig& cfg,
                     int epoch, const std::array<uint64_t, 4>& rng_state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    write_str(out, cfg.to_json_text());
    write_str(out, vocab_to_json(model.vocab));
    write_u64(out, static_cast<uint64_t>(epoch));
    for (uint64_t s : rng_state) write_u64(out, s);
    write_u64(out, model.frozen_fingerprint);

    const auto& entries = model.params.entries();
    write_u64(out, entries.size());
    for (const auto& e : entries) {
        write_str(out, e.name);
        write_u64(out, static_cast<uint64_t>(e.var.val().ndim()));
        for (int d : e.var.val().shape()) write_u64(out, static_cast<uint64_t>(d));
        out.write(reinterpret_cast<const char*>(e.var.val().data()),
                  static_cast<std::streamsize>(e.var.val().numel() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);

    LoadedCheckpoint lc;
    lc.config = TrainConfig::from_json_text(read_str(in));
    const KeypointVocab vocab = vocab_from_json(read_str(in));
    lc.epoch = static_cast<int>(read_u64(in));
    for (auto& s : lc.rng_state) s = read_u64(in);
    const uint64_t saved_fingerprint = read_u64(in);

    lc.model = PpapModel::build(lc.config, vocab);
    if (lc.model.frozen_fingerprint != saved_fingerprint)
        throw std::runtime_error("checkpoint: frozen-encoder fingerprint mismatch");

    const uint64_t n = read_u64(in);
    for (uint64_t i = 0; i < n; ++i) {
        const std::string name = read_str(in);
        const auto ndim = read_u64(in);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_u64(in));
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        const Var* v = lc.model.params.find(name);
        if (v == nullptr) throw std::runtime_error("checkpoint: unknown tensor " + name);
        if (!v->val().same_shape(t))
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        const_cast<Var*>(v)->val_mut() = std::move(t);
    }
    if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
    return lc;
}

}  // namespace ppap
