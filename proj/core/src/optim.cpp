#include "xmodal/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace xmodal {

Tensor& ParamStore::create(const std::string& path, Tensor t) {
    if (params_.count(path)) throw Error("ParamStore: duplicate parameter path '" + path + "'");
    t.set_requires_grad(true);
    auto [it, ok] = params_.emplace(path, std::move(t));
    (void)ok;
    return it->second;
}

Tensor& ParamStore::at(const std::string& path) {
    auto it = params_.find(path);
    if (it == params_.end()) throw Error("ParamStore: unknown parameter path '" + path + "'");
    return it->second;
}

const Tensor& ParamStore::at(const std::string& path) const {
    auto it = params_.find(path);
    if (it == params_.end()) throw Error("ParamStore: unknown parameter path '" + path + "'");
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [path, t] : params_) t.zero_grad();
}

Tensor& init_linear_weight(ParamStore& store, const std::string& path, int64_t fan_in,
                           int64_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> vals(static_cast<size_t>(fan_in * fan_out));
    for (auto& v : vals) v = rng.uniform(-a, a);
    return store.create(path, Tensor({fan_in, fan_out}, std::move(vals)));
}

Tensor& init_zeros(ParamStore& store, const std::string& path, const Shape& shape) {
    return store.create(path, Tensor::zeros(shape));
}

Tensor& init_ones(ParamStore& store, const std::string& path, const Shape& shape) {
    return store.create(path, Tensor::full(shape, 1.0));
}

Tensor& init_uniform(ParamStore& store, const std::string& path, const Shape& shape, double lo,
                     double hi, Rng& rng) {
    std::vector<double> vals(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : vals) v = rng.uniform(lo, hi);
    return store.create(path, Tensor(shape, std::move(vals)));
}

Tensor& init_conv_weight(ParamStore& store, const std::string& path, const Shape& shape,
                         int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> vals(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : vals) v = rng.uniform(-a, a);
    return store.create(path, Tensor(shape, std::move(vals)));
}

void AdamW::step(ParamStore& params) {
    for (auto& [path, t] : params)
        if (!t.has_grad())
            throw Error("AdamW::step: parameter '" + path + "' has no gradient");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [path, t] : params) {
        auto& mom = moments_[path];
        const size_t n = t.values().size();
        if (mom.m.empty()) {
            mom.m.assign(n, 0.0);
            mom.v.assign(n, 0.0);
        }
        auto& p = t.values_mut();
        const auto& g = t.grad();
        for (size_t i = 0; i < n; ++i) {
            mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g[i];
            mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
        }
        t.zero_grad();
    }
}

namespace {

void put_u32_le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void write_f64_le(std::ostream& os, const std::vector<double>& vals) {
    // assumes little-endian host, as everything we target is
    os.write(reinterpret_cast<const char*>(vals.data()),
             static_cast<std::streamsize>(vals.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, t] : params) {
        nlohmann::json entry;
        entry["path"] = name;
        entry["shape"] = t.shape();
        manifest.push_back(entry);
    }
    const std::string mstr = manifest.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("save_checkpoint: cannot open '" + path + "' for writing");
    os.write("XMCL", 4);
    const char version = 1;
    os.write(&version, 1);
    put_u32_le(os, static_cast<uint32_t>(mstr.size()));
    os.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    for (const auto& [name, t] : params) write_f64_le(os, t.values());
    if (!os) throw Error("save_checkpoint: write failure on '" + path + "'");
}

void load_checkpoint(ParamStore& params, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("load_checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "XMCL", 4) != 0)
        throw Error("load_checkpoint: '" + path + "' is not a checkpoint (bad magic)");
    char version;
    is.read(&version, 1);
    if (!is || version != 1)
        throw Error("load_checkpoint: unsupported checkpoint version in '" + path + "'");
    const uint32_t mlen = get_u32_le(is);
    std::string mstr(mlen, '\0');
    is.read(mstr.data(), mlen);
    if (!is) throw Error("load_checkpoint: truncated manifest in '" + path + "'");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mstr);
    } catch (const std::exception& e) {
        throw Error("load_checkpoint: bad manifest JSON in '" + path + "': " + e.what());
    }
    if (manifest.size() != params.size())
        throw Error("load_checkpoint: parameter count mismatch: file has " +
                    std::to_string(manifest.size()) + ", model has " +
                    std::to_string(params.size()));
    for (const auto& entry : manifest) {
        const std::string name = entry.at("path").get<std::string>();
        const Shape shape = entry.at("shape").get<Shape>();
        if (!params.contains(name))
            throw Error("load_checkpoint: file parameter '" + name + "' not in model");
        Tensor& t = params.at(name);
        if (t.shape() != shape)
            throw Error("load_checkpoint: shape mismatch for '" + name + "': file " +
                        shape_str(shape) + " vs model " + shape_str(t.shape()));
        auto& vals = t.values_mut();
        is.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * sizeof(double)));
        if (!is) throw Error("load_checkpoint: truncated values for '" + name + "'");
    }
}

}  // namespace xmodal
