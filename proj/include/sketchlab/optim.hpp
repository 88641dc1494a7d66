#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sketchlab/tensor.hpp"

namespace sketchlab {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Ordered, named collection of learnable tensors. Order is creation order so
// optimizer state lines up deterministically across runs.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t) {
        if (find(name)) throw IoError("duplicate parameter name: " + name);
        items_.push_back({name, std::move(t)});
        return items_.back().second;
    }

    Tensor* find(const std::string& name) {
        for (auto& [n, t] : items_)
            if (n == name) return &t;
        return nullptr;
    }

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [name, t] : items_) n += t.size();
        return n;
    }

    void zero_grads() {
        for (auto& [name, t] : items_) t.zero_grad();
    }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(ParamStore& store, AdamConfig cfg = {}) : store_(store), cfg_(cfg) {
        for (const auto& [name, t] : store.items()) {
            m_.emplace_back(t.size(), 0.0f);
            v_.emplace_back(t.size(), 0.0f);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        size_t pi = 0;
        for (auto& [name, p] : store_.items()) {
            p.n->ensure_grad();
            auto& val = p.value();
            auto& grd = p.grad();
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (size_t i = 0; i < val.size(); ++i) {
                double g = grd[i];
                m[i] = float(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g);
                v[i] = float(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g);
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                val[i] -= float(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
            ++pi;
        }
    }

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    int64_t steps() const { return t_; }

private:
    ParamStore& store_;
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

// Checkpoint container: "SLTC" magic, version, then per tensor the name,
// shape and raw little-endian f32 payload. Layout documented in docs/.
namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("checkpoint: truncated file");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

} // namespace detail

inline void save_params(const std::string& path, const ParamStore& store) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("checkpoint: cannot open for write: " + tmp);
        os.write("SLTC", 4);
        detail::write_u32(os, 1);  // version
        detail::write_u32(os, uint32_t(store.items().size()));
        for (const auto& [name, t] : store.items()) {
            detail::write_u32(os, uint32_t(name.size()));
            os.write(name.data(), std::streamsize(name.size()));
            detail::write_u32(os, uint32_t(t.shape().size()));
            for (int d : t.shape()) detail::write_u32(os, uint32_t(d));
            static_assert(sizeof(float) == 4);
            os.write(reinterpret_cast<const char*>(t.value().data()),
                     std::streamsize(t.value().size() * 4));
        }
        if (!os) throw IoError("checkpoint: write failed: " + tmp);
    }
    // Publish atomically so an interrupted save never leaves a torn file.
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("checkpoint: cannot move into place: " + path + " (" + ec.message() + ")");
}

struct NamedTensorData {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

inline std::vector<NamedTensorData> load_params_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SLTC", 4) != 0)
        throw IoError("checkpoint: bad magic in " + path);
    uint32_t version = detail::read_u32(is);
    if (version != 1) throw IoError("checkpoint: unsupported version");
    uint32_t count = detail::read_u32(is);
    std::vector<NamedTensorData> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensorData t;
        uint32_t name_len = detail::read_u32(is);
        t.name.resize(name_len);
        is.read(t.name.data(), name_len);
        uint32_t rank = detail::read_u32(is);
        t.shape.resize(rank);
        for (uint32_t r = 0; r < rank; ++r) t.shape[r] = int(detail::read_u32(is));
        t.data.resize(size_t(numel(t.shape)));
        is.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(t.data.size() * 4));
        if (!is) throw IoError("checkpoint: truncated tensor payload in " + path);
        out.push_back(std::move(t));
    }
    return out;
}

// Strict restore: every stored tensor must match an existing parameter of the
// same name and shape, and every parameter must be covered.
inline void load_params(const std::string& path, ParamStore& store) {
    auto loaded = load_params_raw(path);
    size_t matched = 0;
    for (auto& t : loaded) {
        Tensor* p = store.find(t.name);
        if (!p) throw IoError("checkpoint: unknown parameter " + t.name);
        if (p->shape() != t.shape)
            throw IoError("checkpoint: shape mismatch for " + t.name + ": file " +
                          shape_str(t.shape) + " vs model " + shape_str(p->shape()));
        p->value() = std::move(t.data);
        ++matched;
    }
    if (matched != store.items().size())
        throw IoError("checkpoint: file covers " + std::to_string(matched) + " of " +
                      std::to_string(store.items().size()) + " parameters");
}

// Partial restore used for transfer: every store parameter whose name starts
// with `prefix` must be present in the file; everything else is untouched.
inline void load_params_prefix(const std::string& path, ParamStore& store,
                               const std::string& prefix) {
    auto loaded = load_params_raw(path);
    for (auto& [name, p] : store.items()) {
        if (name.rfind(prefix, 0) != 0) continue;
        bool found = false;
        for (auto& t : loaded) {
            if (t.name != name) continue;
            if (p.shape() != t.shape)
                throw IoError("checkpoint: shape mismatch for " + name);
            p.value() = t.data;
            found = true;
            break;
        }
        if (!found) throw IoError("checkpoint: missing parameter " + name);
    }
}

} // namespace sketchlab
