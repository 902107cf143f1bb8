#include "rotot/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "rotot/errors.hpp"

namespace rotot {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("shape_size: nonpositive mode size");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

std::size_t linear_index(const Shape& s, const std::vector<int>& idx) {
  if (idx.size() != s.size()) throw ShapeError("linear_index: order mismatch");
  std::size_t lin = 0;
  std::size_t stride = 1;
  for (std::size_t l = 0; l < s.size(); ++l) {
    if (idx[l] < 0 || idx[l] >= s[l])
      throw ShapeError("linear_index: index out of range");
    lin += stride * static_cast<std::size_t>(idx[l]);
    stride *= static_cast<std::size_t>(s[l]);
  }
  return lin;
}

std::vector<int> multi_index(const Shape& s, std::size_t lin) {
  std::vector<int> idx(s.size());
  for (std::size_t l = 0; l < s.size(); ++l) {
    idx[l] = static_cast<int>(lin % static_cast<std::size_t>(s[l]));
    lin /= static_cast<std::size_t>(s[l]);
  }
  return idx;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(shape_size(shape_), fill);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  Tensor t;
  if (data.size() != shape_size(shape))
    throw ShapeError("Tensor::from_data: payload size does not match shape");
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  t.sync_mask_from_nan();
  return t;
}

double Tensor::at(const std::vector<int>& idx) const {
  return data_[linear_index(shape_, idx)];
}

double& Tensor::at(const std::vector<int>& idx) {
  return data_[linear_index(shape_, idx)];
}

bool Tensor::has_missing() const {
  for (unsigned char m : mask_)
    if (!m) return true;
  return false;
}

void Tensor::set_missing(std::size_t i) {
  if (mask_.empty()) mask_.assign(data_.size(), 1);
  mask_[i] = 0;
  data_[i] = std::numeric_limits<double>::quiet_NaN();
}

std::size_t Tensor::observed_count() const {
  if (mask_.empty()) return data_.size();
  std::size_t n = 0;
  for (unsigned char m : mask_)
    if (m) ++n;
  return n;
}

void Tensor::sync_mask_from_nan() {
  bool any = false;
  for (double v : data_)
    if (std::isnan(v)) {
      any = true;
      break;
    }
  if (!any) {
    mask_.clear();
    return;
  }
  mask_.assign(data_.size(), 1);
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (std::isnan(data_[i])) {
      mask_[i] = 0;
      data_[i] = std::numeric_limits<double>::quiet_NaN();
    }
}

namespace {

void check_partition(const Shape& s, const std::vector<int>& rows,
                     const std::vector<int>& cols) {
  std::vector<char> seen(s.size(), 0);
  auto mark = [&](const std::vector<int>& modes) {
    for (int m : modes) {
      if (m < 0 || m >= static_cast<int>(s.size()))
        throw ShapeError("matricize: mode index out of range");
      if (seen[static_cast<std::size_t>(m)])
        throw ShapeError("matricize: mode listed twice");
      seen[static_cast<std::size_t>(m)] = 1;
    }
  };
  mark(rows);
  mark(cols);
  for (char c : seen)
    if (!c) throw ShapeError("matricize: mode partition incomplete");
}

// Per-mode strides of the group index (first listed mode fastest).
std::vector<std::size_t> group_strides(const Shape& s,
                                       const std::vector<int>& modes) {
  std::vector<std::size_t> strides(modes.size());
  std::size_t acc = 1;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    strides[i] = acc;
    acc *= static_cast<std::size_t>(s[static_cast<std::size_t>(modes[i])]);
  }
  return strides;
}

std::size_t group_size(const Shape& s, const std::vector<int>& modes) {
  std::size_t acc = 1;
  for (int m : modes) acc *= static_cast<std::size_t>(s[static_cast<std::size_t>(m)]);
  return acc;
}

}  // namespace

Eigen::MatrixXd matricize(const Tensor& t, const std::vector<int>& row_modes,
                          const std::vector<int>& col_modes) {
  const Shape& s = t.shape();
  check_partition(s, row_modes, col_modes);
  std::size_t nr = group_size(s, row_modes);
  std::size_t nc = group_size(s, col_modes);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
  std::vector<std::size_t> rstride = group_strides(s, row_modes);
  std::vector<std::size_t> cstride = group_strides(s, col_modes);
  std::size_t total = t.size();
  for (std::size_t lin = 0; lin < total; ++lin) {
    std::vector<int> idx = multi_index(s, lin);
    std::size_t r = 0, c = 0;
    for (std::size_t i = 0; i < row_modes.size(); ++i)
      r += rstride[i] * static_cast<std::size_t>(idx[static_cast<std::size_t>(row_modes[i])]);
    for (std::size_t i = 0; i < col_modes.size(); ++i)
      c += cstride[i] * static_cast<std::size_t>(idx[static_cast<std::size_t>(col_modes[i])]);
    m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t[lin];
  }
  return m;
}

Tensor dematricize(const Eigen::MatrixXd& m, const Shape& shape,
                   const std::vector<int>& row_modes,
                   const std::vector<int>& col_modes) {
  check_partition(shape, row_modes, col_modes);
  std::size_t nr = group_size(shape, row_modes);
  std::size_t nc = group_size(shape, col_modes);
  if (static_cast<std::size_t>(m.rows()) != nr ||
      static_cast<std::size_t>(m.cols()) != nc)
    throw ShapeError("dematricize: matrix size does not match partition");
  Tensor t(shape);
  std::vector<std::size_t> rstride = group_strides(shape, row_modes);
  std::vector<std::size_t> cstride = group_strides(shape, col_modes);
  std::size_t total = t.size();
  for (std::size_t lin = 0; lin < total; ++lin) {
    std::vector<int> idx = multi_index(shape, lin);
    std::size_t r = 0, c = 0;
    for (std::size_t i = 0; i < row_modes.size(); ++i)
      r += rstride[i] * static_cast<std::size_t>(idx[static_cast<std::size_t>(row_modes[i])]);
    for (std::size_t i = 0; i < col_modes.size(); ++i)
      c += cstride[i] * static_cast<std::size_t>(idx[static_cast<std::size_t>(col_modes[i])]);
    t[lin] = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  return t;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!same_shape(a.shape(), b.shape()))
    throw ShapeError("hadamard: shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  Tensor r(a.shape());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = a[i] * b[i];
  return r;
}

double frobenius_norm(const Tensor& t) {
  double acc = 0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
  return std::sqrt(acc);
}

Tensor contract(const Tensor& a, const Tensor& b, int shared) {
  if (shared < 0 || shared > a.order() || shared > b.order())
    throw ShapeError("contract: invalid number of shared modes");
  int la = a.order() - shared;
  for (int i = 0; i < shared; ++i)
    if (a.shape()[static_cast<std::size_t>(la + i)] !=
        b.shape()[static_cast<std::size_t>(i)])
      throw ShapeError("contract: shared mode sizes differ");

  std::vector<int> a_lead(static_cast<std::size_t>(la));
  std::vector<int> a_tail(static_cast<std::size_t>(shared));
  for (int i = 0; i < la; ++i) a_lead[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < shared; ++i) a_tail[static_cast<std::size_t>(i)] = la + i;
  int lb = b.order() - shared;
  std::vector<int> b_lead(static_cast<std::size_t>(shared));
  std::vector<int> b_tail(static_cast<std::size_t>(lb));
  for (int i = 0; i < shared; ++i) b_lead[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < lb; ++i) b_tail[static_cast<std::size_t>(i)] = shared + i;

  Eigen::MatrixXd am = matricize(a, a_lead, a_tail);
  Eigen::MatrixXd bm = matricize(b, b_lead, b_tail);
  Eigen::MatrixXd pm = am * bm;

  Shape rs;
  rs.reserve(static_cast<std::size_t>(la + lb));
  for (int i = 0; i < la; ++i) rs.push_back(a.shape()[static_cast<std::size_t>(i)]);
  for (int i = 0; i < lb; ++i)
    rs.push_back(b.shape()[static_cast<std::size_t>(shared + i)]);
  Tensor r(rs);
  // Column-major flatten of pm matches the first-mode-fastest linearization.
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = pm.data()[i];
  return r;
}

Tensor kruskal_full(const std::vector<Eigen::MatrixXd>& factors) {
  if (factors.empty()) throw ShapeError("kruskal_full: no factors");
  Eigen::Index rank = factors[0].cols();
  Shape s;
  for (const auto& f : factors) {
    if (f.cols() != rank) throw ShapeError("kruskal_full: rank mismatch");
    s.push_back(static_cast<int>(f.rows()));
  }
  Tensor t(s, 0.0);
  std::size_t total = t.size();
  for (std::size_t lin = 0; lin < total; ++lin) {
    std::vector<int> idx = multi_index(s, lin);
    double acc = 0;
    for (Eigen::Index r = 0; r < rank; ++r) {
      double p = 1;
      for (std::size_t f = 0; f < factors.size(); ++f)
        p *= factors[f](idx[f], r);
      acc += p;
    }
    t[lin] = acc;
  }
  return t;
}

Tensor kruskal_full(const Tensor& core,
                    const std::vector<Eigen::MatrixXd>& factors) {
  if (static_cast<int>(factors.size()) != core.order())
    throw ShapeError("kruskal_full: core order does not match factor count");
  Shape out;
  for (std::size_t l = 0; l < factors.size(); ++l) {
    if (static_cast<int>(factors[l].cols()) != core.shape()[l])
      throw ShapeError("kruskal_full: factor columns do not match core mode");
    out.push_back(static_cast<int>(factors[l].rows()));
  }
  const Shape& ks = core.shape();
  Tensor t(out, 0.0);
  std::size_t total = t.size();
  std::size_t ksize = core.size();
  for (std::size_t lin = 0; lin < total; ++lin) {
    std::vector<int> idx = multi_index(out, lin);
    double acc = 0;
    for (std::size_t klin = 0; klin < ksize; ++klin) {
      std::vector<int> kidx = multi_index(ks, klin);
      double p = core[klin];
      for (std::size_t l = 0; l < factors.size() && p != 0.0; ++l)
        p *= factors[l](idx[l], kidx[l]);
      acc += p;
    }
    t[lin] = acc;
  }
  return t;
}

double cp_norm_sq(const std::vector<Eigen::MatrixXd>& factors) {
  if (factors.empty()) throw ShapeError("cp_norm_sq: no factors");
  Eigen::Index rank = factors[0].cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(rank, rank);
  for (const auto& f : factors) {
    if (f.cols() != rank) throw ShapeError("cp_norm_sq: rank mismatch");
    g = g.cwiseProduct((f.transpose() * f).eval());
  }
  return g.sum();
}

}  // namespace rotot
