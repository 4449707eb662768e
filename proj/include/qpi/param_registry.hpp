#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "qpi/errors.hpp"
#include "qpi/tensor.hpp"

namespace qpi {

// Named parameter tensors with trainable/frozen flags, in deterministic
// insertion order. Freezing, parameter counting, checkpointing and the
// optimizer all operate through this view of a model.
template <typename T>
class ParamRegistry {
public:
    struct Entry {
        std::string name;
        Tensor<T> tensor;
        bool trainable = true;
    };

    void add(const std::string& name, Tensor<T> tensor, bool trainable = true) {
        if (index_.count(name)) {
            throw UsageError("param registry: duplicate name '" + name + "'");
        }
        index_[name] = entries_.size();
        tensor.set_requires_grad(trainable);
        entries_.push_back({name, std::move(tensor), trainable});
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Entry& entry(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("param registry: unknown name '" + name + "'");
        return entries_[it->second];
    }

    const Entry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("param registry: unknown name '" + name + "'");
        return entries_[it->second];
    }

    Tensor<T>& tensor(const std::string& name) { return entry(name).tensor; }

    void set_trainable(const std::string& name, bool trainable) {
        Entry& e = entry(name);
        e.trainable = trainable;
        e.tensor.set_requires_grad(trainable);
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    std::size_t size() const { return entries_.size(); }

    void zero_grads() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

    std::size_t count_trainable() const {
        std::size_t n = 0;
        for (const auto& e : entries_) {
            if (e.trainable) n += e.tensor.numel();
        }
        return n;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace qpi
