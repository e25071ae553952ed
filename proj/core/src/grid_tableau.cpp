#include "bsderk/grid_tableau.hpp"

#include <cmath>
#include <sstream>

#include "bsderk/errors.hpp"

namespace bsderk {

namespace {

void check_abscissae(const std::vector<double>& c) {
  if (c.size() < 2) throw InvalidParameter("abscissae need at least c_1 and c_{Q+1}");
  if (c.front() != 0.0) throw InvalidParameter("c_1 must be 0");
  if (c.back() != 1.0) throw InvalidParameter("c_{Q+1} must be 1");
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (!(c[i] >= c[i - 1])) throw InvalidParameter("abscissae must be non-decreasing");
    if (!(c[i] > 0.0)) throw InvalidParameter("c_q must be positive for q > 1");
    // Coincident instances are only meaningful at the end of the step.
    if (c[i] == c[i - 1] && c[i] != 1.0) {
      throw InvalidParameter("repeated abscissae are only allowed at c = 1");
    }
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::euler_implicit: return "euler_implicit";
    case SchemeKind::euler_explicit: return "euler_explicit";
    case SchemeKind::theta: return "theta";
    case SchemeKind::crank_nicolson: return "crank_nicolson";
    case SchemeKind::rk2: return "rk2";
    case SchemeKind::rk3: return "rk3";
  }
  return "unknown";
}

SchemeKind scheme_kind_from_string(std::string_view name) {
  for (auto k : {SchemeKind::euler_implicit, SchemeKind::euler_explicit, SchemeKind::theta,
                 SchemeKind::crank_nicolson, SchemeKind::rk2, SchemeKind::rk3}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidParameter("unknown scheme kind '" + std::string(name) + "'");
}

TimeGrid::TimeGrid(double horizon, int steps, std::vector<double> abscissae)
    : horizon_(horizon), steps_(steps), step_(0.0), c_(std::move(abscissae)) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidParameter("horizon must be positive");
  if (steps < 1) throw InvalidParameter("number of steps must be at least 1");
  check_abscissae(c_);
  step_ = horizon_ / steps_;
}

double TimeGrid::time(int n) const {
  if (n < 0 || n > steps_) throw InvalidParameter("time index out of range");
  // Exact endpoints regardless of rounding in n*h.
  return n == steps_ ? horizon_ : n * step_;
}

double TimeGrid::instance(int n, int q) const {
  if (n < 0 || n >= steps_) throw InvalidParameter("step index out of range");
  if (q < 1 || q > stages() + 1) throw InvalidParameter("stage index out of range");
  if (q == 1) return time(n + 1);
  if (q == stages() + 1) return time(n);
  return time(n + 1) - c(q) * step_;
}

RKTableau::RKTableau(SchemeKind kind, std::vector<double> c, Matrix a, Matrix alpha)
    : kind_(kind), c_(std::move(c)) {
  check_abscissae(c_);
  const std::size_t n = c_.size();
  auto flatten = [n](const Matrix& m, const char* name) {
    if (m.size() != n) throw InvalidParameter(std::string(name) + " must have Q+1 rows");
    std::vector<double> flat;
    flat.reserve(n * n);
    for (const auto& row : m) {
      if (row.size() != n) throw InvalidParameter(std::string(name) + " must have Q+1 columns");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return flat;
  };
  a_ = flatten(a, "a");
  alpha_ = flatten(alpha, "alpha");
  check_structure();
}

std::size_t RKTableau::idx(int q, int k) const {
  const int n = static_cast<int>(c_.size());
  if (q < 1 || q > n || k < 1 || k > n) throw InvalidParameter("tableau index out of range");
  return static_cast<std::size_t>((q - 1) * n + (k - 1));
}

void RKTableau::check_structure() const {
  const int n = static_cast<int>(c_.size());
  for (int q = 1; q <= n; ++q) {
    for (int k = 1; k <= n; ++k) {
      const double aq = a(q, k);
      const double al = alpha(q, k);
      if (!std::isfinite(aq) || !std::isfinite(al)) throw InvalidParameter("non-finite coefficient");
      if (q == 1 && (aq != 0.0 || al != 0.0)) throw InvalidParameter("first row must vanish");
      if (k > q && (aq != 0.0 || al != 0.0)) throw InvalidParameter("coefficients above the diagonal must vanish");
      if (k == q && al != 0.0) throw InvalidParameter("alpha must be strictly lower triangular");
    }
  }
}

bool RKTableau::explicit_scheme() const {
  for (int q = 2; q <= stages() + 1; ++q) {
    if (a(q, q) != 0.0) return false;
  }
  return true;
}

RKTableau RKTableau::with_a(int q, int k, double value) const {
  RKTableau copy = *this;
  copy.a_.at(idx(q, k)) = value;
  copy.check_structure();
  return copy;
}

RKTableau RKTableau::with_alpha(int q, int k, double value) const {
  RKTableau copy = *this;
  copy.alpha_.at(idx(q, k)) = value;
  copy.check_structure();
  return copy;
}

nlohmann::json RKTableau::to_json() const {
  const int n = static_cast<int>(c_.size());
  nlohmann::json ja = nlohmann::json::array();
  nlohmann::json jal = nlohmann::json::array();
  for (int q = 1; q <= n; ++q) {
    nlohmann::json ra = nlohmann::json::array();
    nlohmann::json ral = nlohmann::json::array();
    for (int k = 1; k <= n; ++k) {
      ra.push_back(a(q, k));
      ral.push_back(alpha(q, k));
    }
    ja.push_back(ra);
    jal.push_back(ral);
  }
  return {{"Q", stages()}, {"c", c_}, {"a", ja}, {"alpha", jal}, {"kind", std::string(to_string(kind_))}};
}

RKTableau RKTableau::from_json(const nlohmann::json& j) {
  try {
    auto t = RKTableau(scheme_kind_from_string(j.at("kind").get<std::string>()),
                       j.at("c").get<std::vector<double>>(), j.at("a").get<Matrix>(),
                       j.at("alpha").get<Matrix>());
    if (t.stages() != j.at("Q").get<int>()) throw InvalidParameter("Q does not match the abscissae");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter(std::string("malformed tableau json: ") + e.what());
  }
}

RKTableau theta_tableau(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidParameter("theta must lie in [0, 1]");
  SchemeKind kind = SchemeKind::theta;
  if (theta == 1.0) kind = SchemeKind::euler_implicit;
  if (theta == 0.0) kind = SchemeKind::euler_explicit;
  return RKTableau(kind, {0.0, 1.0}, {{0.0, 0.0}, {1.0 - theta, theta}}, {{0.0, 0.0}, {1.0, 0.0}});
}

RKTableau crank_nicolson_tableau() {
  return RKTableau(SchemeKind::crank_nicolson, {0.0, 1.0}, {{0.0, 0.0}, {0.5, 0.5}},
                   {{0.0, 0.0}, {1.0, 0.0}});
}

RKTableau rk2_tableau(double c2) {
  if (!(c2 > 0.0 && c2 <= 1.0)) throw InvalidParameter("rk2 requires 0 < c2 <= 1");
  const double a31 = 1.0 - 1.0 / (2.0 * c2);
  const double a32 = 1.0 / (2.0 * c2);
  RKTableau::Matrix a = {{0, 0, 0}, {c2, 0, 0}, {a31, a32, 0}};
  RKTableau::Matrix alpha = a;
  // With c2 = 1 the second instance coincides with t_n and only alpha31 is
  // weighted by the indicator 1{c_k < c_q}.
  if (c2 == 1.0) alpha[2][0] = 1.0;
  return RKTableau(SchemeKind::rk2, {0.0, c2, 1.0}, a, alpha);
}

RKTableau rk3_tableau(double c2, double c3) {
  if (!(c2 > 0.0 && c2 < c3 && c3 <= 1.0)) throw InvalidParameter("rk3 requires 0 < c2 < c3 <= 1");
  if (std::abs(2.0 - 3.0 * c2) < 1e-12) throw InvalidParameter("rk3 requires c2 != 2/3");
  const double a21 = c2;
  const double a31 = c3 * (3.0 * c2 - 3.0 * c2 * c2 - c3) / (c2 * (2.0 - 3.0 * c2));
  const double a32 = c3 * (c3 - c2) / (c2 * (2.0 - 3.0 * c2));
  const double a42 = (3.0 * c3 - 2.0) / (6.0 * c2 * (c3 - c2));
  const double a43 = (2.0 - 3.0 * c2) / (6.0 * c3 * (c3 - c2));
  const double a41 = 1.0 - a42 - a43;
  RKTableau::Matrix a = {{0, 0, 0, 0}, {a21, 0, 0, 0}, {a31, a32, 0, 0}, {a41, a42, a43, 0}};
  RKTableau::Matrix alpha = a;
  if (c3 == 1.0) {
    // X_{n,3} = X_n: the row-4 alpha conditions drop alpha43.
    alpha[3][1] = 1.0 / (2.0 * c2);
    alpha[3][0] = 1.0 - alpha[3][1];
  }
  return RKTableau(SchemeKind::rk3, {0.0, c2, c3, 1.0}, a, alpha);
}

OrderReport validate_order_conditions(const RKTableau& t, int order, double tol) {
  const int Q = t.stages();
  if (order < 1 || order > 3) throw InvalidParameter("order must be 1, 2 or 3");
  if (order == 1 && Q != 1) throw InvalidParameter("order 1 conditions apply to one-stage schemes");
  if (order == 2 && Q != 1 && Q != 2) throw InvalidParameter("order 2 conditions apply to Q = 1 or Q = 2");
  if (order == 3 && Q != 3) throw InvalidParameter("order 3 conditions apply to three-stage schemes");

  OrderReport report;
  auto require = [&](double lhs, double rhs, const std::string& what) {
    if (!(std::abs(lhs - rhs) <= tol)) {
      report.passed = false;
      report.violations.push_back(what + " (" + fmt(lhs) + " vs " + fmt(rhs) + ")");
    }
  };
  auto ind = [&](int k, int q) { return t.c(k) < t.c(q) ? 1.0 : 0.0; };

  for (int q = 2; q <= Q + 1; ++q) {
    double sa = 0.0, sal = 0.0;
    for (int k = 1; k <= q; ++k) sa += t.a(q, k);
    for (int k = 1; k < q; ++k) sal += t.alpha(q, k) * ind(k, q);
    require(sa, t.c(q), "sum_k a_qk ≠ c_q at q=" + std::to_string(q));
    require(sal, t.c(q), "sum_k alpha_qk 1{c_k<c_q} ≠ c_q at q=" + std::to_string(q));
  }

  if (Q == 1) {
    require(t.a(2, 1) + t.a(2, 2), 1.0, "a21+a22 ≠ 1 at q=2");
    if (order == 2) {
      require(t.a(2, 1), 0.5, "a21 ≠ 1/2");
      require(t.a(2, 2), 0.5, "a22 ≠ 1/2");
      require(t.alpha(2, 1), 1.0, "alpha21 ≠ 1");
    }
  } else if (Q == 2) {
    const double c2 = t.c(2);
    require(t.a(2, 2), 0.0, "a22 ≠ 0");
    require(t.a(3, 3), 0.0, "a33 ≠ 0");
    require(t.a(2, 1), c2, "a21 ≠ c2");
    require(t.a(3, 1), 1.0 - 1.0 / (2.0 * c2), "a31 ≠ 1 - 1/(2 c2)");
    require(t.a(3, 2), 1.0 / (2.0 * c2), "a32 ≠ 1/(2 c2)");
    require(t.alpha(3, 1) + t.alpha(3, 2) * ind(2, 3), 1.0, "alpha31 + alpha32 1{c2<1} ≠ 1");
  } else {
    const double c2 = t.c(2), c3 = t.c(3);
    if (!(0.0 < c2 && c2 < c3 && c3 <= 1.0)) {
      report.passed = false;
      report.violations.push_back("0 < c2 < c3 <= 1 violated");
    }
    if (c3 == 1.0 && std::abs(c2 - 2.0 / 3.0) <= tol) {
      report.passed = false;
      report.violations.push_back("c2 = 2/3 with c3 = 1");
    }
    const double i3 = c3 < 1.0 ? 1.0 : 0.0;
    require(t.a(2, 2), 0.0, "a22 ≠ 0");
    require(t.a(3, 3), 0.0, "a33 ≠ 0");
    require(t.a(4, 4), 0.0, "a44 ≠ 0");
    require(t.a(4, 1) + t.a(4, 2) + t.a(4, 3), 1.0, "a41+a42+a43 ≠ 1");
    require(t.a(4, 2) * c2 + t.a(4, 3) * c3, 0.5, "a42 c2 + a43 c3 ≠ 1/2");
    require(t.a(4, 2) * c2 * c2 + t.a(4, 3) * c3 * c3, 1.0 / 3.0, "a42 c2^2 + a43 c3^2 ≠ 1/3");
    require(t.a(4, 3) * t.a(3, 2) * c2, 1.0 / 6.0, "a43 a32 c2 ≠ 1/6");
    require(t.a(4, 3) * t.alpha(3, 2) * c2, 1.0 / 6.0, "a43 alpha32 c2 ≠ 1/6");
    require(t.alpha(4, 1) + t.alpha(4, 2) + t.alpha(4, 3) * i3, 1.0,
            "alpha41 + alpha42 + alpha43 1{c3<1} ≠ 1");
    require(t.alpha(4, 2) * c2 + t.alpha(4, 3) * c3 * i3, 0.5,
            "alpha42 c2 + alpha43 c3 1{c3<1} ≠ 1/2");
  }
  return report;
}

bool well_posed(const RKTableau& tableau, double step, double lipschitz) {
  double worst = 0.0;
  for (int q = 2; q <= tableau.stages() + 1; ++q) worst = std::max(worst, std::abs(tableau.a(q, q)));
  return worst * step * lipschitz < 1.0;
}

}  // namespace bsderk
