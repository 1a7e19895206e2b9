#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedsim {

struct LayoutSegment {
  std::string name;
  std::vector<int64_t> shape;

  int64_t size() const;
  bool operator==(const LayoutSegment&) const = default;
};

using Layout = std::vector<LayoutSegment>;

int64_t layout_size(const Layout& layout);

/// Flat real-valued parameter vector with named segment metadata. The shared
/// currency of training, aggregation, attacks and defenses. Operations treat
/// it as immutable and return new vectors; two vectors are combinable only if
/// their layouts are identical.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<double> values, std::shared_ptr<const Layout> layout);

  static ParamVector zeros_like(const ParamVector& other);

  bool empty() const { return values_.empty(); }
  int64_t size() const { return static_cast<int64_t>(values_.size()); }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  double operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }
  double& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }

  const Layout& layout() const;
  const std::shared_ptr<const Layout>& layout_ptr() const { return layout_; }
  bool same_layout(const ParamVector& other) const;

  std::span<const double> segment(std::string_view name) const;
  std::span<double> segment(std::string_view name);

  bool all_finite() const;
  /// Throws ContractError naming `what` if any value is NaN or infinite.
  void check_finite(std::string_view what) const;

  bool operator==(const ParamVector& other) const;

 private:
  std::vector<double> values_;
  std::shared_ptr<const Layout> layout_;
};

void check_same_layout(const ParamVector& a, const ParamVector& b,
                       std::string_view what);

ParamVector operator+(const ParamVector& a, const ParamVector& b);
ParamVector operator-(const ParamVector& a, const ParamVector& b);
ParamVector operator*(double s, const ParamVector& v);

/// y += a * x
void axpy(double a, const ParamVector& x, ParamVector& y);
double dot(const ParamVector& a, const ParamVector& b);
double l2_norm(const ParamVector& v);
double squared_distance(const ParamVector& a, const ParamVector& b);

}  // namespace fedsim
