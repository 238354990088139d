#include "fbl/drift.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "fbl/gridio.hpp"
#include "fbl/spectral.hpp"

namespace fbl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_dim(int d) {
  if (d < 3) throw std::invalid_argument("drift: dimension must be >= 3, got " + std::to_string(d));
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double separable_profile(const SeparableParams& p, double t, double* slope) {
  const auto n = p.profile.size();
  const double u = (t - p.t0) / p.dt;
  if (n < 2 || u < 0.0 || u > static_cast<double>(n - 1)) {
    if (slope) *slope = 0.0;
    return 0.0;
  }
  auto j = static_cast<std::size_t>(u);
  if (j >= n - 1) j = n - 2;
  const double f = u - static_cast<double>(j);
  if (slope) *slope = (p.profile[j + 1] - p.profile[j]) / p.dt;
  return p.profile[j] * (1.0 - f) + p.profile[j + 1] * f;
}

}  // namespace

std::string to_string(DriftKind k) {
  switch (k) {
    case DriftKind::zero: return "zero";
    case DriftKind::hardy: return "hardy";
    case DriftKind::annulus_log: return "annulus_log";
    case DriftKind::separable: return "separable";
    case DriftKind::grid_sampled: return "grid_sampled";
    case DriftKind::linear: return "linear";
    case DriftKind::constant: return "constant";
    case DriftKind::sum: return "sum";
  }
  return "?";
}

double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

DriftField DriftField::zero(int d) {
  if (d < 1) throw std::invalid_argument("drift: dimension must be positive");
  DriftField f;
  f.d_ = d;
  f.kind_ = DriftKind::zero;
  return f;
}

DriftField DriftField::constant(std::vector<double> c) {
  DriftField f;
  f.d_ = static_cast<int>(c.size());
  f.kind_ = DriftKind::constant;
  f.constant_.c = std::move(c);
  return f;
}

DriftField DriftField::linear(int d, std::vector<double> A) {
  if (A.size() != static_cast<std::size_t>(d * d)) throw std::invalid_argument("linear drift: A must be d x d");
  DriftField f;
  f.d_ = d;
  f.kind_ = DriftKind::linear;
  f.linear_.A = std::move(A);
  return f;
}

DriftField DriftField::sum(std::vector<DriftField> parts) {
  if (parts.empty()) throw std::invalid_argument("sum drift: no parts");
  const int d = parts.front().dimension();
  for (const auto& p : parts)
    if (p.dimension() != d) throw std::invalid_argument("sum drift: dimension mismatch between parts");
  DriftField f;
  f.d_ = d;
  f.kind_ = DriftKind::sum;
  f.parts_ = std::move(parts);
  return f;
}

DriftField DriftField::grid_sampled(VectorField values, bool with_gradient) {
  auto vals = std::make_shared<const VectorField>(std::move(values));
  std::shared_ptr<const std::vector<std::vector<double>>> grad;
  if (with_gradient) {
    const BoxGrid& g = vals->grid;
    const int d = g.dim();
    Spectral sp(g);
    auto gr = std::make_shared<std::vector<std::vector<double>>>(static_cast<std::size_t>(d * d),
                                                                 std::vector<double>(g.size()));
    for (int a = 0; a < d; ++a)
      for (int k = 0; k < d; ++k) sp.derivative(vals->comp[a], k, (*gr)[a * d + k]);
    grad = std::move(gr);
  }
  return grid_sampled(std::move(vals), std::move(grad));
}

DriftField DriftField::grid_sampled(std::shared_ptr<const VectorField> values,
                                    std::shared_ptr<const std::vector<std::vector<double>>> gradient) {
  if (!values) throw std::invalid_argument("grid_sampled drift: null samples");
  DriftField f;
  f.d_ = values->grid.dim();
  if (static_cast<int>(values->comp.size()) != f.d_)
    throw std::invalid_argument("grid_sampled drift: component count must equal dimension");
  f.kind_ = DriftKind::grid_sampled;
  f.grid_.values = std::move(values);
  f.grid_.gradient = std::move(gradient);
  return f;
}

DriftField DriftField::separable(int d, SeparableParams p) {
  require_dim(d);
  if (p.map.size() != static_cast<std::size_t>(d) || p.direction.size() != static_cast<std::size_t>(d))
    throw std::invalid_argument("separable drift: map and direction must have length d");
  if (p.profile.size() < 2 || !(p.dt > 0.0)) throw std::invalid_argument("separable drift: need >= 2 profile samples and dt > 0");
  const double en = std::sqrt(norm2(p.direction));
  if (!(en > 0.0)) throw std::invalid_argument("separable drift: direction must be nonzero");
  for (double& e : p.direction) e /= en;
  DriftField f;
  f.d_ = d;
  f.kind_ = DriftKind::separable;
  f.separable_ = std::move(p);
  return f;
}

DriftField make_hardy_drift(int d, double beta, int sign) {
  require_dim(d);
  if (!(beta > 0.0)) throw std::invalid_argument("hardy drift: beta must be positive");
  if (sign != 1 && sign != -1) throw std::invalid_argument("hardy drift: sign must be +1 or -1");
  DriftField f;
  f.d_ = d;
  f.kind_ = DriftKind::hardy;
  f.hardy_ = {beta, sign};
  return f;
}

DriftField make_annulus_log_drift(double C, double alpha, double beta_exp, int d) {
  require_dim(d);
  if (!(C > 0.0)) throw std::invalid_argument("annulus_log drift: C must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("annulus_log drift: alpha must lie in (0,1)");
  if (!(beta_exp > 1.0)) throw std::invalid_argument("annulus_log drift: exponent must exceed 1");
  DriftField f;
  f.d_ = d;
  f.kind_ = DriftKind::annulus_log;
  f.annulus_ = {C, alpha, beta_exp};
  return f;
}

bool DriftField::differentiable() const {
  switch (kind_) {
    case DriftKind::zero:
    case DriftKind::hardy:
    case DriftKind::separable:
    case DriftKind::linear:
    case DriftKind::constant: return true;
    case DriftKind::annulus_log: return false;
    case DriftKind::grid_sampled: return static_cast<bool>(grid_.gradient);
    case DriftKind::sum:
      for (const auto& p : parts_)
        if (!p.differentiable()) return false;
      return true;
  }
  return false;
}

std::string DriftField::singular_set() const {
  switch (kind_) {
    case DriftKind::hardy: return "origin";
    case DriftKind::annulus_log: return "sphere |x|=1";
    case DriftKind::sum: {
      std::string s;
      for (const auto& p : parts_) {
        auto ps = p.singular_set();
        if (ps == "none") continue;
        s += (s.empty() ? "" : " + ") + ps;
      }
      return s.empty() ? "none" : s;
    }
    default: return "none";
  }
}

double DriftField::magnitude(std::span<const double> x) const {
  switch (kind_) {
    case DriftKind::zero: return 0.0;
    case DriftKind::hardy: {
      const double r = std::sqrt(norm2(x));
      return r > 0.0 ? std::abs(scale_) * hardy_.beta / r : kInf;
    }
    case DriftKind::annulus_log: {
      const double r = std::sqrt(norm2(x));
      const double a = annulus_.alpha;
      if (!(r > 1.0 - a && r < 1.0 + a)) return 0.0;
      const double s = std::abs(r - 1.0);
      if (s == 0.0) return kInf;
      return std::abs(scale_) * std::sqrt(annulus_.C / (s * std::pow(-std::log(s), annulus_.beta_exp)));
    }
    default: {
      std::vector<double> v(static_cast<std::size_t>(d_));
      eval(x, v);
      return std::sqrt(norm2(v));
    }
  }
}

void DriftField::eval(std::span<const double> x, std::span<double> out) const {
  const auto d = static_cast<std::size_t>(d_);
  switch (kind_) {
    case DriftKind::zero:
      for (std::size_t i = 0; i < d; ++i) out[i] = 0.0;
      return;
    case DriftKind::hardy: {
      const double r2 = norm2(x);
      if (r2 == 0.0) {
        for (std::size_t i = 0; i < d; ++i) out[i] = kInf;
        return;
      }
      const double c = scale_ * hardy_.sign * hardy_.beta / r2;
      for (std::size_t i = 0; i < d; ++i) out[i] = c * x[i];
      return;
    }
    case DriftKind::annulus_log: {
      const double m = magnitude(x);
      const double r = std::sqrt(norm2(x));
      const double sgn = scale_ < 0.0 ? -1.0 : 1.0;
      for (std::size_t i = 0; i < d; ++i) out[i] = (m == 0.0) ? 0.0 : sgn * m * x[i] / r;
      return;
    }
    case DriftKind::separable: {
      double t = 0.0;
      for (std::size_t i = 0; i < d; ++i) t += separable_.map[i] * x[i];
      const double h = scale_ * separable_profile(separable_, t, nullptr);
      for (std::size_t i = 0; i < d; ++i) out[i] = h * separable_.direction[i];
      return;
    }
    case DriftKind::grid_sampled: {
      const auto& v = *grid_.values;
      for (std::size_t i = 0; i < d; ++i) out[i] = scale_ * interpolate(v.grid, v.comp[i], x);
      return;
    }
    case DriftKind::linear:
      for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += linear_.A[i * d + k] * x[k];
        out[i] = scale_ * s;
      }
      return;
    case DriftKind::constant:
      for (std::size_t i = 0; i < d; ++i) out[i] = scale_ * constant_.c[i];
      return;
    case DriftKind::sum: {
      std::vector<double> tmp(d);
      for (std::size_t i = 0; i < d; ++i) out[i] = 0.0;
      for (const auto& p : parts_) {
        p.eval(x, tmp);
        for (std::size_t i = 0; i < d; ++i) out[i] += scale_ * tmp[i];
      }
      return;
    }
  }
}

void DriftField::gradient(std::span<const double> x, std::span<double> out) const {
  if (!differentiable()) throw std::logic_error("drift of kind " + to_string(kind_) + " has no gradient");
  const auto d = static_cast<std::size_t>(d_);
  for (std::size_t i = 0; i < d * d; ++i) out[i] = 0.0;
  switch (kind_) {
    case DriftKind::zero:
    case DriftKind::constant:
    case DriftKind::annulus_log: return;
    case DriftKind::hardy: {
      const double r2 = norm2(x);
      const double c = scale_ * hardy_.sign * hardy_.beta;
      if (r2 == 0.0) {
        for (std::size_t i = 0; i < d * d; ++i) out[i] = kInf;
        return;
      }
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t k = 0; k < d; ++k)
          out[a * d + k] = c * ((a == k ? 1.0 : 0.0) / r2 - 2.0 * x[a] * x[k] / (r2 * r2));
      return;
    }
    case DriftKind::separable: {
      double t = 0.0;
      for (std::size_t i = 0; i < d; ++i) t += separable_.map[i] * x[i];
      double slope = 0.0;
      separable_profile(separable_, t, &slope);
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t k = 0; k < d; ++k)
          out[a * d + k] = scale_ * slope * separable_.map[k] * separable_.direction[a];
      return;
    }
    case DriftKind::grid_sampled: {
      const auto& g = grid_.values->grid;
      for (std::size_t c = 0; c < d * d; ++c) out[c] = scale_ * interpolate(g, (*grid_.gradient)[c], x);
      return;
    }
    case DriftKind::linear:
      for (std::size_t c = 0; c < d * d; ++c) out[c] = scale_ * linear_.A[c];
      return;
    case DriftKind::sum: {
      std::vector<double> tmp(d * d);
      for (const auto& p : parts_) {
        p.gradient(x, tmp);
        for (std::size_t c = 0; c < d * d; ++c) out[c] += scale_ * tmp[c];
      }
      return;
    }
  }
}

DriftField DriftField::scaled(double c) const {
  DriftField f = *this;
  f.scale_ *= c;
  return f;
}

VectorField DriftField::sample(const BoxGrid& grid, double cap) const {
  if (grid.dim() != d_) throw std::invalid_argument("sample: grid dimension differs from drift dimension");
  VectorField out(grid);
  const auto d = static_cast<std::size_t>(d_);
  std::vector<double> x(d), v(d);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, x);
    eval(x, v);
    const double m = std::sqrt(norm2(v));
    if (!std::isfinite(m)) {
      // direction unavailable at the singular point: use the radial one
      const double r = std::sqrt(norm2(x));
      for (std::size_t k = 0; k < d; ++k) out.comp[k][i] = r > 0.0 ? cap * x[k] / r : 0.0;
      continue;
    }
    const double f = m > cap ? cap / m : 1.0;
    for (std::size_t k = 0; k < d; ++k) out.comp[k][i] = f * v[k];
  }
  return out;
}

nlohmann::json DriftField::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind_);
  j["d"] = d_;
  if (scale_ != 1.0) j["scale"] = scale_;
  switch (kind_) {
    case DriftKind::hardy:
      j["beta"] = hardy_.beta;
      j["sign"] = hardy_.sign;
      break;
    case DriftKind::annulus_log:
      j["C"] = annulus_.C;
      j["alpha"] = annulus_.alpha;
      j["beta_exp"] = annulus_.beta_exp;
      break;
    case DriftKind::separable:
      j["profile"] = separable_.profile;
      j["t0"] = separable_.t0;
      j["dt"] = separable_.dt;
      j["map"] = separable_.map;
      j["direction"] = separable_.direction;
      break;
    case DriftKind::grid_sampled:
      if (!grid_.source.empty()) j["file"] = grid_.source;
      j["gradient"] = static_cast<bool>(grid_.gradient);
      j["n"] = grid_.values->grid.points_per_axis();
      j["L"] = grid_.values->grid.half_width();
      break;
    case DriftKind::linear: j["A"] = linear_.A; break;
    case DriftKind::constant: j["c"] = constant_.c; break;
    case DriftKind::sum: {
      j["parts"] = nlohmann::json::array();
      for (const auto& p : parts_) j["parts"].push_back(p.to_json());
      break;
    }
    case DriftKind::zero: break;
  }
  return j;
}

DriftField drift_from_json(const nlohmann::json& j, const std::string& base_dir) {
  const std::string kind = j.at("kind").get<std::string>();
  const int d = j.value("d", 3);
  DriftField f;
  if (kind == "zero") {
    f = DriftField::zero(d);
  } else if (kind == "hardy") {
    f = make_hardy_drift(d, j.at("beta").get<double>(), j.value("sign", 1));
  } else if (kind == "annulus_log") {
    f = make_annulus_log_drift(j.at("C").get<double>(), j.at("alpha").get<double>(),
                               j.at("beta_exp").get<double>(), d);
  } else if (kind == "separable") {
    SeparableParams p;
    p.profile = j.at("profile").get<std::vector<double>>();
    p.t0 = j.value("t0", 0.0);
    p.dt = j.value("dt", 1.0);
    p.map = j.at("map").get<std::vector<double>>();
    p.direction = j.at("direction").get<std::vector<double>>();
    f = DriftField::separable(d, std::move(p));
  } else if (kind == "grid_sampled") {
    std::filesystem::path path = j.at("file").get<std::string>();
    if (path.is_relative()) path = std::filesystem::path(base_dir) / path;
    GridFile gf = read_grid_file(path.string());
    VectorField v(gf.grid);
    if (static_cast<int>(gf.comp.size()) != gf.grid.dim())
      throw std::runtime_error("grid_sampled drift: file has " + std::to_string(gf.comp.size()) +
                               " components, expected " + std::to_string(gf.grid.dim()));
    v.comp = std::move(gf.comp);
    f = DriftField::grid_sampled(std::move(v), j.value("gradient", gf.grid.boundary() == Boundary::periodic));
    f.grid_.source = j.at("file").get<std::string>();
  } else if (kind == "linear") {
    f = DriftField::linear(d, j.at("A").get<std::vector<double>>());
  } else if (kind == "constant") {
    f = DriftField::constant(j.at("c").get<std::vector<double>>());
  } else if (kind == "sum") {
    std::vector<DriftField> parts;
    for (const auto& p : j.at("parts")) parts.push_back(drift_from_json(p, base_dir));
    f = DriftField::sum(std::move(parts));
  } else {
    throw std::invalid_argument("unknown drift kind '" + kind + "'");
  }
  if (j.contains("scale")) f = f.scaled(j.at("scale").get<double>());
  return f;
}

}  // namespace fbl
