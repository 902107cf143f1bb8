#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

namespace rotot {

// Mode sizes of a dense tensor. Order-0 (empty shape, one scalar entry) is
// allowed in memory but not in files.
using Shape = std::vector<int>;

std::size_t shape_size(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);
std::string shape_str(const Shape& s);

// Linearization convention used throughout: the first listed mode runs fastest,
//   lin = idx[0] + P0*(idx[1] + P1*(idx[2] + ...)),   all 0-based.
// This is the (1-based) index map  j = 1 + sum_l (p_l - 1) * prod_{h<l} P_h.
std::size_t linear_index(const Shape& s, const std::vector<int>& idx);
std::vector<int> multi_index(const Shape& s, std::size_t lin);

// Dense real tensor with an optional observation mask. Missing entries hold a
// quiet NaN in the data payload and a 0 in the mask; an empty mask means fully
// observed. Algebra routines below ignore the mask (NaNs propagate), so callers
// dealing with incomplete data must handle masks explicitly.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  static Tensor from_data(Shape shape, std::vector<double> data);

  int order() const { return static_cast<int>(shape_.size()); }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(const std::vector<int>& idx) const;
  double& at(const std::vector<int>& idx);

  const std::vector<double>& values() const { return data_; }
  std::vector<double>& values() { return data_; }

  // Mask handling. observed(i) is true when there is no mask or mask[i] != 0.
  bool has_mask() const { return !mask_.empty(); }
  bool has_missing() const;
  bool observed(std::size_t i) const {
    return mask_.empty() || mask_[i] != 0;
  }
  void set_missing(std::size_t i);
  std::size_t observed_count() const;
  const std::vector<unsigned char>& mask() const { return mask_; }
  // Rebuilds the mask from NaN entries in the data (used by file readers).
  void sync_mask_from_nan();

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<unsigned char> mask_;  // empty = complete
};

// Matricization: row_modes and col_modes are ordered, disjoint, 0-based mode
// lists that together partition 0..order-1. Within each group the first listed
// mode runs fastest. Throws ShapeError on an invalid partition.
Eigen::MatrixXd matricize(const Tensor& t, const std::vector<int>& row_modes,
                          const std::vector<int>& col_modes);
Tensor dematricize(const Eigen::MatrixXd& m, const Shape& shape,
                   const std::vector<int>& row_modes,
                   const std::vector<int>& col_modes);

// Elementwise product; shapes must match.
Tensor hadamard(const Tensor& a, const Tensor& b);

// sqrt of the sum of squared entries; mask ignored.
double frobenius_norm(const Tensor& t);

// Contracted product over the trailing `shared` modes of a and the leading
// `shared` modes of b. Result shape: a-leading ++ b-trailing. For matrices with
// shared=1 this is the ordinary matrix product.
Tensor contract(const Tensor& a, const Tensor& b, int shared);

// CP (Kruskal) tensor: entry = sum_r prod_f factors[f](idx_f, r). All factor
// matrices must share the same column count.
Tensor kruskal_full(const std::vector<Eigen::MatrixXd>& factors);

// Core version: entry = sum_{k1..kL} core(k) * prod_l factors[l](idx_l, k_l),
// with factors[l] of size P_l x K_l and core of shape K_1 x ... x K_L.
Tensor kruskal_full(const Tensor& core,
                    const std::vector<Eigen::MatrixXd>& factors);

// ||[[factors]]||_F^2 via the Hadamard product of the factor Gram matrices.
double cp_norm_sq(const std::vector<Eigen::MatrixXd>& factors);

}  // namespace rotot
