#include "fedsim/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

Dataset::Dataset(std::vector<double> features, std::vector<int> labels,
                 int64_t dim, int num_classes)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      dim_(dim),
      num_classes_(num_classes) {
  if (dim_ <= 0) throw ContractError("Dataset: dim must be positive");
  if (num_classes_ < 2)
    throw ContractError("Dataset: num_classes must be at least 2");
  if (features_.size() != labels_.size() * static_cast<size_t>(dim_))
    throw ContractError("Dataset: feature row count does not match label count");
  for (double v : features_)
    if (!std::isfinite(v)) throw ContractError("Dataset: non-finite feature");
  for (int y : labels_)
    if (y < 0 || y >= num_classes_)
      throw ContractError("Dataset: label " + std::to_string(y) +
                          " outside [0, " + std::to_string(num_classes_) + ")");
}

Dataset Dataset::subset(std::span<const int64_t> indices) const {
  std::vector<double> feats;
  feats.reserve(indices.size() * static_cast<size_t>(dim_));
  std::vector<int> labs;
  labs.reserve(indices.size());
  for (int64_t i : indices) {
    if (i < 0 || i >= size())
      throw ContractError("Dataset::subset: index out of range");
    auto r = row(i);
    feats.insert(feats.end(), r.begin(), r.end());
    labs.push_back(label(i));
  }
  return Dataset(std::move(feats), std::move(labs), dim_, num_classes_);
}

Dataset Dataset::with_labels(std::vector<int> labels) const {
  if (labels.size() != labels_.size())
    throw ContractError("Dataset::with_labels: label count mismatch");
  return Dataset(features_, std::move(labels), dim_, num_classes_);
}

Dataset load_csv_dataset(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file: " + path);

  // Header must be exactly f0,...,f{dim-1},label.
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  if (cols.size() < 2 || cols.back() != "label")
    throw IoError(path + ": header must end with 'label'");
  const int64_t dim = static_cast<int64_t>(cols.size()) - 1;
  for (int64_t j = 0; j < dim; ++j) {
    if (cols[static_cast<size_t>(j)] != "f" + std::to_string(j))
      throw IoError(path + ": header column " + std::to_string(j) +
                    " must be f" + std::to_string(j));
  }

  std::vector<double> features;
  std::vector<int> labels;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(ss, tok, ',')) toks.push_back(tok);
    if (static_cast<int64_t>(toks.size()) != dim + 1)
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": expected " + std::to_string(dim + 1) + " fields");
    try {
      for (int64_t j = 0; j < dim; ++j)
        features.push_back(std::stod(toks[static_cast<size_t>(j)]));
      labels.push_back(std::stoi(toks.back()));
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": unparsable field");
    }
  }
  if (labels.empty()) throw IoError(path + ": no data rows");

  if (num_classes <= 0) {
    int maxy = 0;
    for (int y : labels) maxy = std::max(maxy, y);
    num_classes = std::max(maxy + 1, 2);
  }
  return Dataset(std::move(features), std::move(labels), dim, num_classes);
}

}  // namespace fedsim
