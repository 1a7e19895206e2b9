#include "fedsim/param_vector.hpp"

#include <cmath>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

int64_t LayoutSegment::size() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

int64_t layout_size(const Layout& layout) {
  int64_t n = 0;
  for (const auto& seg : layout) n += seg.size();
  return n;
}

ParamVector::ParamVector(std::vector<double> values,
                         std::shared_ptr<const Layout> layout)
    : values_(std::move(values)), layout_(std::move(layout)) {
  if (!layout_) throw ContractError("ParamVector: null layout");
  if (layout_size(*layout_) != static_cast<int64_t>(values_.size())) {
    std::ostringstream os;
    os << "ParamVector: layout size " << layout_size(*layout_)
       << " does not match value count " << values_.size();
    throw ContractError(os.str());
  }
}

ParamVector ParamVector::zeros_like(const ParamVector& other) {
  return ParamVector(std::vector<double>(other.values_.size(), 0.0),
                     other.layout_);
}

const Layout& ParamVector::layout() const {
  if (!layout_) throw ContractError("ParamVector: empty vector has no layout");
  return *layout_;
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (layout_ == other.layout_) return true;
  if (!layout_ || !other.layout_) return false;
  return *layout_ == *other.layout_;
}

std::span<const double> ParamVector::segment(std::string_view name) const {
  int64_t offset = 0;
  for (const auto& seg : layout()) {
    if (seg.name == name)
      return {values_.data() + offset, static_cast<size_t>(seg.size())};
    offset += seg.size();
  }
  throw ContractError("ParamVector: no segment named '" + std::string(name) +
                      "'");
}

std::span<double> ParamVector::segment(std::string_view name) {
  auto view = static_cast<const ParamVector&>(*this).segment(name);
  return {const_cast<double*>(view.data()), view.size()};
}

bool ParamVector::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

void ParamVector::check_finite(std::string_view what) const {
  if (!all_finite())
    throw ContractError(std::string(what) + ": non-finite parameter value");
}

bool ParamVector::operator==(const ParamVector& other) const {
  return same_layout(other) && values_ == other.values_;
}

void check_same_layout(const ParamVector& a, const ParamVector& b,
                       std::string_view what) {
  if (!a.same_layout(b))
    throw ContractError(std::string(what) + ": parameter layout mismatch");
}

ParamVector operator+(const ParamVector& a, const ParamVector& b) {
  check_same_layout(a, b, "operator+");
  ParamVector out = a;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  check_same_layout(a, b, "operator-");
  ParamVector out = a;
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

ParamVector operator*(double s, const ParamVector& v) {
  ParamVector out = v;
  for (double& x : out.values()) x *= s;
  return out;
}

void axpy(double a, const ParamVector& x, ParamVector& y) {
  check_same_layout(x, y, "axpy");
  for (int64_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double dot(const ParamVector& a, const ParamVector& b) {
  check_same_layout(a, b, "dot");
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const ParamVector& v) {
  double s = 0.0;
  for (double x : v.values()) s += x * x;
  return std::sqrt(s);
}

double squared_distance(const ParamVector& a, const ParamVector& b) {
  check_same_layout(a, b, "squared_distance");
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace fedsim
