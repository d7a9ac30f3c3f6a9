#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "synic/errors.hpp"

namespace synic {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct NamedTensor {
    std::string name;
    MatX<S> mat;
};

// Ordered collection of named parameter tensors. Order is fixed by insertion,
// which keeps flat indexing, serialization and optimizer state aligned.
template <typename S>
class ParamSet {
  public:
    MatX<S>& add(std::string name, Eigen::Index rows, Eigen::Index cols) {
        if (index_.count(name)) throw ContractError("ParamSet::add: duplicate tensor " + name);
        index_.emplace(name, tensors_.size());
        tensors_.push_back({std::move(name), MatX<S>::Zero(rows, cols)});
        return tensors_.back().mat;
    }

    bool has(std::string_view name) const { return index_.count(std::string(name)) > 0; }

    MatX<S>& at(std::string_view name) {
        return tensors_[index_of(name)].mat;
    }
    const MatX<S>& at(std::string_view name) const {
        return tensors_[index_of(name)].mat;
    }

    size_t size() const { return tensors_.size(); }
    const NamedTensor<S>& tensor(size_t i) const { return tensors_[i]; }
    NamedTensor<S>& tensor(size_t i) { return tensors_[i]; }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& t : tensors_) n += static_cast<size_t>(t.mat.size());
        return n;
    }

    // Flat coordinate view across all tensors in insertion order; row-major
    // within each tensor. Used by the finite-difference gradient checks.
    S get_flat(size_t i) const {
        const auto [t, off] = locate(i);
        return t->mat.data()[off];
    }
    void set_flat(size_t i, S v) {
        const auto [t, off] = locate_mut(i);
        t->mat.data()[off] = v;
    }

    void set_zero() {
        for (auto& t : tensors_) t.mat.setZero();
    }

    ParamSet<S> zeros_like() const {
        ParamSet<S> out;
        for (const auto& t : tensors_) out.add(t.name, t.mat.rows(), t.mat.cols());
        return out;
    }

    void add_scaled(const ParamSet<S>& other, S alpha) {
        check_same_shape(other);
        for (size_t i = 0; i < tensors_.size(); ++i) tensors_[i].mat += alpha * other.tensors_[i].mat;
    }

    void scale(S alpha) {
        for (auto& t : tensors_) t.mat *= alpha;
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& t : tensors_) s += t.mat.template cast<double>().squaredNorm();
        return s;
    }

    template <typename T>
    ParamSet<T> cast() const {
        ParamSet<T> out;
        for (const auto& t : tensors_) {
            auto& m = out.add(t.name, t.mat.rows(), t.mat.cols());
            m = t.mat.template cast<T>();
        }
        return out;
    }

    void check_same_shape(const ParamSet<S>& other) const {
        if (other.tensors_.size() != tensors_.size())
            throw ContractError("ParamSet: tensor count mismatch");
        for (size_t i = 0; i < tensors_.size(); ++i) {
            const auto& a = tensors_[i];
            const auto& b = other.tensors_[i];
            if (a.name != b.name || a.mat.rows() != b.mat.rows() || a.mat.cols() != b.mat.cols())
                throw ContractError("ParamSet: shape mismatch at " + a.name);
        }
    }

  private:
    size_t index_of(std::string_view name) const {
        const auto it = index_.find(std::string(name));
        if (it == index_.end()) throw ContractError("ParamSet: no tensor named " + std::string(name));
        return it->second;
    }

    std::pair<const NamedTensor<S>*, size_t> locate(size_t i) const {
        for (const auto& t : tensors_) {
            const size_t n = static_cast<size_t>(t.mat.size());
            if (i < n) return {&t, i};
            i -= n;
        }
        throw ContractError("ParamSet: flat index out of range");
    }
    std::pair<NamedTensor<S>*, size_t> locate_mut(size_t i) {
        for (auto& t : tensors_) {
            const size_t n = static_cast<size_t>(t.mat.size());
            if (i < n) return {&t, i};
            i -= n;
        }
        throw ContractError("ParamSet: flat index out of range");
    }

    std::vector<NamedTensor<S>> tensors_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace synic
