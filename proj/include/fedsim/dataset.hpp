#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedsim {

/// Dense feature matrix with integer class labels in [0, num_classes).
/// Immutable after construction; transformations return new datasets.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<double> features, std::vector<int> labels, int64_t dim,
          int num_classes);

  int64_t size() const { return static_cast<int64_t>(labels_.size()); }
  bool empty() const { return labels_.empty(); }
  int64_t dim() const { return dim_; }
  int num_classes() const { return num_classes_; }

  std::span<const double> row(int64_t i) const {
    return {features_.data() + i * dim_, static_cast<size_t>(dim_)};
  }
  int label(int64_t i) const { return labels_[static_cast<size_t>(i)]; }

  const std::vector<double>& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }

  Dataset subset(std::span<const int64_t> indices) const;
  /// Same features, replacement labels (must have matching length).
  Dataset with_labels(std::vector<int> labels) const;

 private:
  std::vector<double> features_;  // row-major, size() x dim()
  std::vector<int> labels_;
  int64_t dim_ = 0;
  int num_classes_ = 0;
};

/// Loads a CSV with header f0,...,f{dim-1},label and non-negative integer
/// labels. num_classes 0 means infer as max label + 1.
Dataset load_csv_dataset(const std::string& path, int num_classes = 0);

}  // namespace fedsim
