// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gecolab/tape.hpp"
#include "gecolab/tensor.hpp"

namespace gecolab {

// Ordered collection of named parameter tensors. Order is insertion order and
// is part of the serialized format, so optimizer state stays aligned.
class ParameterStore {
public:
    int add(const std::string& name, Tensor value);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    Tensor& at(int idx) { return values_[static_cast<size_t>(idx)]; }
    const Tensor& at(int idx) const { return values_[static_cast<size_t>(idx)]; }
    int index_of(const std::string& name) const;
    const std::vector<std::string>& names() const { return names_; }
    int count() const { return static_cast<int>(names_.size()); }
    size_t total_count() const;
    bool all_finite() const;

    // Copies values from another store with identical names/shapes.
    void copy_from(const ParameterStore& other);
    bool same_layout(const ParameterStore& other) const;
    double max_abs_diff_from(const ParameterStore& other) const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::unordered_map<std::string, int> index_;
};

// Binds a store to one tape: parameters become leaves (trainable) or
// constants. One Var per parameter per tape.
class ParamBinding {
public:
    ParamBinding(ad::Tape& tape, ParameterStore& store, bool trainable)
        : tape_(&tape), store_(&store), trainable_(trainable), vars_(static_cast<size_t>(store.count())) {}

    ad::Var operator()(const std::string& name);
    // Gradients aligned with store order; zeros where a parameter was unused.
    std::vector<Tensor> collect_grads() const;
    ParameterStore& store() { return *store_; }

private:
    ad::Tape* tape_;
    ParameterStore* store_;
    bool trainable_;
    std::vector<ad::Var> vars_;
};

struct AdamConfig {
    double lr = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
    void step(ParameterStore& ps, const std::vector<Tensor>& grads);
    long steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    long t_ = 0;
};

double grad_norm(const std::vector<Tensor>& grads);

// Checkpoint container: a JSON header (model kind, config digest, schedule,
// arch, lineage) plus the parameter arrays. Binary layout:
//   "GCKP" | u32 version | u64 header_len | header json | u64 n_arrays |
//   per array: u64 name_len | name | u32 ndim | i32 dims... | f64 data...
struct Checkpoint {
    nlohmann::json header;
    ParameterStore params;

    static constexpr uint32_t kVersion = 1;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace gecolab
