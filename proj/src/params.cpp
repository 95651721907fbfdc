// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "gecolab/errors.hpp"

namespace gecolab {

int ParameterStore::add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw ConfigError("parameter already exists: " + name);
    int idx = static_cast<int>(names_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
    index_[name] = idx;
    return idx;
}

Tensor& ParameterStore::get(const std::string& name) {
    return values_[static_cast<size_t>(index_of(name))];
}

const Tensor& ParameterStore::get(const std::string& name) const {
    return values_[static_cast<size_t>(index_of(name))];
}

int ParameterStore::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

size_t ParameterStore::total_count() const {
    size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

bool ParameterStore::all_finite() const {
    for (const auto& v : values_)
        if (!v.all_finite()) return false;
    return true;
}

void ParameterStore::copy_from(const ParameterStore& other) {
    if (!same_layout(other)) throw ShapeError("copy_from: parameter layout mismatch");
    for (size_t i = 0; i < values_.size(); ++i) values_[i] = other.values_[i];
}

bool ParameterStore::same_layout(const ParameterStore& other) const {
    if (names_ != other.names_) return false;
    for (size_t i = 0; i < values_.size(); ++i)
        if (values_[i].shape() != other.values_[i].shape()) return false;
    return true;
}

double ParameterStore::max_abs_diff_from(const ParameterStore& other) const {
    if (!same_layout(other)) throw ShapeError("max_abs_diff_from: layout mismatch");
    double m = 0.0;
    for (size_t i = 0; i < values_.size(); ++i) m = std::max(m, max_abs_diff(values_[i], other.values_[i]));
    return m;
}

ad::Var ParamBinding::operator()(const std::string& name) {
    int idx = store_->index_of(name);
    ad::Var& v = vars_[static_cast<size_t>(idx)];
    if (!v.defined()) v = trainable_ ? tape_->leaf(store_->at(idx)) : tape_->constant(store_->at(idx));
    return v;
}

std::vector<Tensor> ParamBinding::collect_grads() const {
    std::vector<Tensor> out;
    out.reserve(vars_.size());
    for (size_t i = 0; i < vars_.size(); ++i) {
        const ad::Var& v = vars_[i];
        if (v.defined() && tape_->has_grad(v.index()))
            out.push_back(tape_->grad(v));
        else
            out.push_back(Tensor(store_->at(static_cast<int>(i)).shape()));
    }
    return out;
}

void Adam::step(ParameterStore& ps, const std::vector<Tensor>& grads) {
    if (grads.size() != static_cast<size_t>(ps.count())) throw ShapeError("adam: grad count mismatch");
    if (m_.empty()) {
        m_.reserve(grads.size());
        v_.reserve(grads.size());
        for (int i = 0; i < ps.count(); ++i) {
            m_.emplace_back(ps.at(i).shape());
            v_.emplace_back(ps.at(i).shape());
        }
    }
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (int p = 0; p < ps.count(); ++p) {
        Tensor& w = ps.at(p);
        const Tensor& g = grads[static_cast<size_t>(p)];
        if (w.shape() != g.shape()) throw ShapeError("adam: grad shape mismatch at " + ps.names()[static_cast<size_t>(p)]);
        Tensor& m = m_[static_cast<size_t>(p)];
        Tensor& v = v_[static_cast<size_t>(p)];
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            double mh = m[i] / bc1;
            double vh = v[i] / bc2;
            w[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
}

double grad_norm(const std::vector<Tensor>& grads) {
    double acc = 0.0;
    for (const auto& g : grads)
        for (size_t i = 0; i < g.size(); ++i) acc += g[i] * g[i];
    return std::sqrt(acc);
}

namespace {

template <class T>
void write_pod(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw StorageError("checkpoint: truncated file");
    return v;
}

} // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw StorageError("cannot open for write: " + tmp.string());
        os.write("GCKP", 4);
        write_pod<uint32_t>(os, Checkpoint::kVersion);
        std::string hdr = ck.header.dump();
        write_pod<uint64_t>(os, hdr.size());
        os.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
        write_pod<uint64_t>(os, static_cast<uint64_t>(ck.params.count()));
        for (int i = 0; i < ck.params.count(); ++i) {
            const std::string& name = ck.params.names()[static_cast<size_t>(i)];
            const Tensor& t = ck.params.at(i);
            write_pod<uint64_t>(os, name.size());
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
            for (int d = 0; d < t.ndim(); ++d) write_pod<int32_t>(os, t.dim(d));
            os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        }
        if (!os) throw StorageError("checkpoint write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StorageError("cannot open checkpoint: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GCKP", 4) != 0) throw StorageError("bad checkpoint magic: " + path.string());
    uint32_t version = read_pod<uint32_t>(is);
    if (version != Checkpoint::kVersion) throw StorageError("unsupported checkpoint version");
    uint64_t hlen = read_pod<uint64_t>(is);
    std::string hdr(hlen, '\0');
    is.read(hdr.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw StorageError("checkpoint: truncated header");
    Checkpoint ck;
    ck.header = nlohmann::json::parse(hdr);
    uint64_t n = read_pod<uint64_t>(is);
    for (uint64_t i = 0; i < n; ++i) {
        uint64_t nlen = read_pod<uint64_t>(is);
        std::string name(nlen, '\0');
        is.read(name.data(), static_cast<std::streamsize>(nlen));
        uint32_t ndim = read_pod<uint32_t>(is);
        std::vector<int> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = read_pod<int32_t>(is);
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) throw StorageError("checkpoint: truncated array " + name);
        ck.params.add(name, std::move(t));
    }
    return ck;
}

} // namespace gecolab
