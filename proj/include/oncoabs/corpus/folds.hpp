#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "oncoabs/common/error.hpp"
#include "oncoabs/common/rng.hpp"
#include "oncoabs/corpus/types.hpp"

namespace oncoabs::corpus {

/// Fold index per patient, aligned with `patients`. Cancer patients and
/// controls are shuffled separately and dealt round-robin so both are spread
/// evenly over folds.
inline std::vector<std::size_t> split_folds(const std::vector<Patient>& patients, std::size_t n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ConfigError("n_folds", "must be at least 2");
  if (n_folds > patients.size())
    throw ConfigError("n_folds", "more folds (" + std::to_string(n_folds) + ") than patients (" +
                                     std::to_string(patients.size()) + ")");
  std::vector<std::size_t> cancer, control;
  for (std::size_t i = 0; i < patients.size(); ++i) (patients[i].is_cancer() ? cancer : control).push_back(i);
  Rng rng(seed);
  rng.shuffle(cancer);
  rng.shuffle(control);
  std::vector<std::size_t> fold(patients.size(), 0);
  std::size_t k = 0;
  for (auto i : cancer) fold[i] = k++ % n_folds;
  for (auto i : control) fold[i] = k++ % n_folds;
  return fold;
}

enum class Partition { Train, Dev, Test, Heldout };

/// Maps folds to partitions; unlisted folds are held out.
struct FoldPlan {
  std::size_t n_folds = 10;
  std::set<std::size_t> train{0, 1, 2, 3, 4};
  std::set<std::size_t> dev{5};
  std::set<std::size_t> test{6, 7};

  Partition partition(std::size_t fold) const {
    if (train.count(fold)) return Partition::Train;
    if (dev.count(fold)) return Partition::Dev;
    if (test.count(fold)) return Partition::Test;
    return Partition::Heldout;
  }

  void validate() const {
    for (const auto* s : {&train, &dev, &test})
      for (auto f : *s)
        if (f >= n_folds) throw ConfigError("folds", "fold " + std::to_string(f) + " out of range");
    for (auto f : train)
      if (dev.count(f) || test.count(f)) throw ConfigError("folds", "fold " + std::to_string(f) + " in two partitions");
    for (auto f : dev)
      if (test.count(f)) throw ConfigError("folds", "fold " + std::to_string(f) + " in two partitions");
    if (train.empty() || dev.empty() || test.empty()) throw ConfigError("folds", "train, dev and test need a fold each");
  }
};

/// Indices into `patients` for one partition.
inline std::vector<std::size_t> partition_indices(const std::vector<std::size_t>& fold, const FoldPlan& plan, Partition p) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (plan.partition(fold[i]) == p) out.push_back(i);
  return out;
}

}  // namespace oncoabs::corpus
