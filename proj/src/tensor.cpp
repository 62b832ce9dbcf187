#include "jdr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace jdr {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw RankError("tensor rank must be at least 1");
  for (auto e : shape)
    if (e == 0) throw ShapeMismatch("zero extent in shape " + to_string(shape));
}

Shape row_major_strides(const Shape& shape) {
  Shape strides(shape.size());
  std::size_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[i] = s;
    s *= shape[i];
  }
  return strides;
}

// Advances a multi-index odometer-style; returns false after the last index.
bool next_index(std::vector<std::size_t>& idx, const Shape& extents) {
  for (std::size_t i = idx.size(); i-- > 0;) {
    if (++idx[i] < extents[i]) return true;
    idx[i] = 0;
  }
  return false;
}

struct ContractionPlan {
  std::vector<std::size_t> free_a, free_b, paired_a, paired_b;
  Shape result_shape;
  std::size_t m = 1, n = 1, k = 1;
};

template <typename T>
ContractionPlan plan_contraction(const Tensor<T>& a, const Tensor<T>& b, std::span<const AxisPair> pairing) {
  ContractionPlan plan;
  std::vector<bool> used_a(a.rank(), false), used_b(b.rank(), false);
  for (const auto& p : pairing) {
    if (p.a >= a.rank() || p.b >= b.rank())
      throw RankError("paired axis (" + std::to_string(p.a) + "," + std::to_string(p.b) +
                      ") out of range for ranks " + std::to_string(a.rank()) + "," + std::to_string(b.rank()));
    if (used_a[p.a] || used_b[p.b]) throw RankError("axis paired twice");
    if (a.extent(p.a) != b.extent(p.b))
      throw ShapeMismatch("paired extents differ: " + to_string(a.shape()) + " axis " + std::to_string(p.a) +
                          " vs " + to_string(b.shape()) + " axis " + std::to_string(p.b));
    used_a[p.a] = used_b[p.b] = true;
    plan.paired_a.push_back(p.a);
    plan.paired_b.push_back(p.b);
    plan.k *= a.extent(p.a);
  }
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (!used_a[i]) {
      plan.free_a.push_back(i);
      plan.result_shape.push_back(a.extent(i));
      plan.m *= a.extent(i);
    }
  for (std::size_t i = 0; i < b.rank(); ++i)
    if (!used_b[i]) {
      plan.free_b.push_back(i);
      plan.result_shape.push_back(b.extent(i));
      plan.n *= b.extent(i);
    }
  if (plan.result_shape.empty()) plan.result_shape.push_back(1);
  return plan;
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(element_count(shape_), T{0});
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(element_count(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (element_count(shape_) != data_.size())
    throw ShapeMismatch("shape " + to_string(shape_) + " needs " + std::to_string(element_count(shape_)) +
                        " elements, got " + std::to_string(data_.size()));
}

template <typename T>
std::size_t Tensor<T>::extent(std::size_t axis) const {
  if (axis >= shape_.size()) throw RankError("axis " + std::to_string(axis) + " out of range");
  return shape_[axis];
}

template <typename T>
std::vector<std::size_t> Tensor<T>::strides() const {
  return row_major_strides(shape_);
}

template <typename T>
std::size_t Tensor<T>::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw RankError("index rank does not match tensor rank");
  std::size_t off = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) throw RankError("index out of range on axis " + std::to_string(i));
    off = off * shape_[i] + index[i];
  }
  return off;
}

template <typename T>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  constexpr std::size_t kTile = 256;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t j0 = 0; j0 < n; j0 += kTile) {
      const std::size_t j1 = std::min(n, j0 + kTile);
      for (std::size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        if (av == T{0}) continue;
        const T* brow = b + p * n;
        for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void gemm_accumulate_serial(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, std::span<const std::size_t> order) {
  if (order.size() != a.rank()) throw RankError("permutation rank mismatch");
  std::vector<bool> seen(a.rank(), false);
  Shape out_shape(a.rank());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= a.rank() || seen[order[i]]) throw RankError("invalid permutation");
    seen[order[i]] = true;
    out_shape[i] = a.extent(order[i]);
  }
  const auto in_strides = a.strides();
  Shape src_strides(a.rank());
  for (std::size_t i = 0; i < order.size(); ++i) src_strides[i] = in_strides[order[i]];

  Tensor<T> out(out_shape);
  std::vector<std::size_t> idx(a.rank(), 0);
  std::size_t flat = 0;
  do {
    std::size_t src = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) src += idx[i] * src_strides[i];
    out[flat++] = a[src];
  } while (next_index(idx, out_shape));
  return out;
}

template <typename T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::span<const AxisPair> pairing) {
  const auto plan = plan_contraction(a, b, pairing);

  // Bring a to (free..., paired...) and b to (paired..., free...), then one GEMM.
  std::vector<std::size_t> order_a = plan.free_a;
  order_a.insert(order_a.end(), plan.paired_a.begin(), plan.paired_a.end());
  std::vector<std::size_t> order_b = plan.paired_b;
  order_b.insert(order_b.end(), plan.free_b.begin(), plan.free_b.end());

  auto is_identity = [](const std::vector<std::size_t>& o) {
    for (std::size_t i = 0; i < o.size(); ++i)
      if (o[i] != i) return false;
    return true;
  };
  const Tensor<T> pa = is_identity(order_a) ? a : permute(a, order_a);
  const Tensor<T> pb = is_identity(order_b) ? b : permute(b, order_b);

  Tensor<T> out(plan.result_shape);
  gemm_accumulate(plan.m, plan.n, plan.k, pa.raw(), pb.raw(), out.raw());
  return out;
}

template <typename T>
Tensor<T> contract_serial(const Tensor<T>& a, const Tensor<T>& b, std::span<const AxisPair> pairing) {
  const auto plan = plan_contraction(a, b, pairing);
  Shape paired_extents;
  for (auto ax : plan.paired_a) paired_extents.push_back(a.extent(ax));

  Tensor<T> out(plan.result_shape);
  std::vector<std::size_t> ia(a.rank(), 0), ib(b.rank(), 0);
  std::vector<std::size_t> res_idx(plan.free_a.size() + plan.free_b.size(), 0);
  Shape res_extents;
  for (auto ax : plan.free_a) res_extents.push_back(a.extent(ax));
  for (auto ax : plan.free_b) res_extents.push_back(b.extent(ax));

  std::size_t flat = 0;
  do {
    for (std::size_t i = 0; i < plan.free_a.size(); ++i) ia[plan.free_a[i]] = res_idx[i];
    for (std::size_t i = 0; i < plan.free_b.size(); ++i) ib[plan.free_b[i]] = res_idx[plan.free_a.size() + i];
    T acc{0};
    std::vector<std::size_t> pidx(paired_extents.size(), 0);
    do {
      for (std::size_t i = 0; i < pidx.size(); ++i) {
        ia[plan.paired_a[i]] = pidx[i];
        ib[plan.paired_b[i]] = pidx[i];
      }
      acc += a.at(std::span<const std::size_t>(ia)) * b.at(std::span<const std::size_t>(ib));
    } while (!pidx.empty() && next_index(pidx, paired_extents));
    out[flat++] = acc;
  } while (!res_idx.empty() && next_index(res_idx, res_extents));
  return out;
}

template <typename T>
Tensor<T> reshape(Tensor<T> a, Shape new_shape) {
  validate_shape(new_shape);
  if (element_count(new_shape) != a.size())
    throw ShapeMismatch("cannot reshape " + to_string(a.shape()) + " to " + to_string(new_shape));
  return Tensor<T>(std::move(new_shape), std::move(a).take_data());
}

template <typename T>
Tensor<T> identity_matrix(std::size_t n) {
  Tensor<T> out({n, n});
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] = T{1};
  return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeMismatch("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return worst;
}

#define JDR_INSTANTIATE(T)                                                                             \
  template class Tensor<T>;                                                                            \
  template Tensor<T> contract(const Tensor<T>&, const Tensor<T>&, std::span<const AxisPair>);         \
  template Tensor<T> contract_serial(const Tensor<T>&, const Tensor<T>&, std::span<const AxisPair>);  \
  template Tensor<T> reshape(Tensor<T>, Shape);                                                        \
  template Tensor<T> permute(const Tensor<T>&, std::span<const std::size_t>);                         \
  template Tensor<T> identity_matrix(std::size_t);                                                     \
  template double max_abs_diff(const Tensor<T>&, const Tensor<T>&);                                    \
  template void gemm_accumulate(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);        \
  template void gemm_accumulate_serial(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);

JDR_INSTANTIATE(float)
JDR_INSTANTIATE(double)

#undef JDR_INSTANTIATE

}  // namespace jdr
