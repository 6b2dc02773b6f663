#include "mfarb/pde.hpp"

#include <algorithm>
#include <cmath>

#include "mfarb/stats.hpp"

namespace mfarb {

using stats::KahanSum;

// ---------------------------------------------------------------------------
// grid basics

std::size_t ValueGrid::size() const {
  std::size_t total = tau.size();
  for (const auto& ax : x_axes) total *= ax.size();
  for (const auto& ax : z_axes) total *= ax.size();
  return total;
}

std::size_t ValueGrid::index(int it, const std::vector<int>& ix, const std::vector<int>& iz) const {
  std::size_t flat = static_cast<std::size_t>(it);
  for (int i = 0; i < n; ++i) {
    flat = flat * x_axes[static_cast<std::size_t>(i)].size() +
           static_cast<std::size_t>(ix[static_cast<std::size_t>(i)]);
  }
  for (int p = 0; p < n; ++p) {
    flat = flat * z_axes[static_cast<std::size_t>(p)].size() +
           static_cast<std::size_t>(iz[static_cast<std::size_t>(p)]);
  }
  return flat;
}

double& ValueGrid::at(int it, const std::vector<int>& ix, const std::vector<int>& iz) {
  return u[index(it, ix, iz)];
}

double ValueGrid::value(int it, const std::vector<int>& ix, const std::vector<int>& iz) const {
  return u[index(it, ix, iz)];
}

void ValueGrid::validate() const {
  if (n < 1 || n > 2) throw ConfigError("value grids support n in {1, 2}");
  if (static_cast<int>(x_axes.size()) != n || static_cast<int>(z_axes.size()) != n) {
    throw ConfigError("value grid needs n x-axes and n z-axes");
  }
  auto check_axis = [](const std::vector<double>& ax) {
    for (std::size_t i = 1; i < ax.size(); ++i) {
      if (!(ax[i] > ax[i - 1])) throw ConfigError("grid axes must be strictly increasing");
    }
  };
  check_axis(tau);
  for (const auto& ax : x_axes) check_axis(ax);
  for (const auto& ax : z_axes) check_axis(ax);
  if (u.size() != size()) throw ConfigError("grid value storage size mismatch");
  if (!stderr_.empty() && stderr_.size() != size()) {
    throw ConfigError("grid stderr storage size mismatch");
  }
}

std::vector<double> linspace(double a, double b, int count) {
  if (count < 2) throw ConfigError("linspace needs at least 2 nodes");
  std::vector<double> v(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    v[static_cast<std::size_t>(i)] = a + (b - a) * static_cast<double>(i) / (count - 1);
  }
  return v;
}

std::vector<double> logspace(double a, double b, int count) {
  if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("logspace needs positive endpoints");
  if (count < 2) throw ConfigError("logspace needs at least 2 nodes");
  std::vector<double> v(static_cast<std::size_t>(count));
  const double la = std::log(a), lb = std::log(b);
  for (int i = 0; i < count; ++i) {
    v[static_cast<std::size_t>(i)] = std::exp(la + (lb - la) * static_cast<double>(i) / (count - 1));
  }
  v.front() = a;
  v.back() = b;
  return v;
}

long OperatorField::interior_count() const {
  long c = 0;
  for (auto m : interior) c += m;
  return c;
}

// ---------------------------------------------------------------------------
// nonuniform central stencils

namespace {

struct Stencil3 {
  double wm = 0.0, w0 = 0.0, wp = 0.0;
};

Stencil3 first_weights(double hm, double hp) {
  const double d = hm * hp * (hm + hp);
  return {-hp * hp / d, (hp * hp - hm * hm) / d, hm * hm / d};
}

Stencil3 second_weights(double hm, double hp) {
  const double d = hm * hp * (hm + hp);
  return {2.0 * hp / d, -2.0 * (hm + hp) / d, 2.0 * hm / d};
}

// Accumulates the residual's linear-form weights per grid node for stderr
// propagation; absolute flat indices, merged on insert.
struct WeightMap {
  std::vector<std::pair<std::size_t, double>> entries;
  void add(std::size_t idx, double w) {
    for (auto& e : entries) {
      if (e.first == idx) {
        e.second += w;
        return;
      }
    }
    entries.emplace_back(idx, w);
  }
};

}  // namespace

OperatorField apply_A(const ValueGrid& grid, const CoefficientSet& coeffs, double delta) {
  grid.validate();
  const int n = grid.n;
  const int axes = 1 + 2 * n;

  std::vector<const std::vector<double>*> coord(static_cast<std::size_t>(axes));
  coord[0] = &grid.tau;
  for (int i = 0; i < n; ++i) coord[static_cast<std::size_t>(1 + i)] = &grid.x_axes[static_cast<std::size_t>(i)];
  for (int p = 0; p < n; ++p) {
    coord[static_cast<std::size_t>(1 + n + p)] = &grid.z_axes[static_cast<std::size_t>(p)];
  }
  std::vector<int> sizes(static_cast<std::size_t>(axes));
  for (int ax = 0; ax < axes; ++ax) {
    sizes[static_cast<std::size_t>(ax)] = static_cast<int>(coord[static_cast<std::size_t>(ax)]->size());
    if (sizes[static_cast<std::size_t>(ax)] < 5) {
      throw ConfigError("grid too small: every axis needs at least 5 nodes");
    }
  }
  std::vector<std::size_t> strides(static_cast<std::size_t>(axes));
  strides[static_cast<std::size_t>(axes - 1)] = 1;
  for (int ax = axes - 2; ax >= 0; --ax) {
    strides[static_cast<std::size_t>(ax)] =
        strides[static_cast<std::size_t>(ax + 1)] *
        static_cast<std::size_t>(sizes[static_cast<std::size_t>(ax + 1)]);
  }

  const std::size_t total = grid.size();
  OperatorField field;
  field.d_tau.assign(total, 0.0);
  field.Au.assign(total, 0.0);
  field.residual.assign(total, 0.0);
  field.scale.assign(total, 0.0);
  field.tol.assign(total, 0.0);
  field.interior.assign(total, 0);

  const bool have_se = !grid.stderr_.empty();

  std::vector<int> idx(static_cast<std::size_t>(axes), 0);
  Vec x(n), z(n);
  for (std::size_t flat = 0; flat < total; ++flat) {
    bool interior = true;
    for (int ax = 0; ax < axes; ++ax) {
      const int i = idx[static_cast<std::size_t>(ax)];
      if (i < 1 || i > sizes[static_cast<std::size_t>(ax)] - 2) {
        interior = false;
        break;
      }
    }
    if (interior) {
      for (int i = 0; i < n; ++i) {
        x[i] = (*coord[static_cast<std::size_t>(1 + i)])[static_cast<std::size_t>(
            idx[static_cast<std::size_t>(1 + i)])];
      }
      for (int p = 0; p < n; ++p) {
        z[p] = (*coord[static_cast<std::size_t>(1 + n + p)])[static_cast<std::size_t>(
            idx[static_cast<std::size_t>(1 + n + p)])];
      }
      const double W = delta * x.sum() + (1.0 - delta) * z.sum();
      const Mat a = coeffs.a(x, z);
      const Mat psi = coeffs.psi(x, z);
      const Mat stau = coeffs.s(x, z) * coeffs.tau(x, z).transpose();

      WeightMap wmap;
      auto spacing = [&](int ax) -> std::pair<double, double> {
        const auto& c = *coord[static_cast<std::size_t>(ax)];
        const int i = idx[static_cast<std::size_t>(ax)];
        return {c[static_cast<std::size_t>(i)] - c[static_cast<std::size_t>(i - 1)],
                c[static_cast<std::size_t>(i + 1)] - c[static_cast<std::size_t>(i)]};
      };
      // First/second derivative along one axis; `coef` is this term's weight in
      // the residual functional (positive for d_tau, negative for A-blocks).
      auto deriv1 = [&](int ax, double coef) {
        auto [hm, hp] = spacing(ax);
        const Stencil3 w = first_weights(hm, hp);
        const std::size_t s = strides[static_cast<std::size_t>(ax)];
        const double val =
            w.wm * grid.u[flat - s] + w.w0 * grid.u[flat] + w.wp * grid.u[flat + s];
        if (have_se && coef != 0.0) {
          wmap.add(flat - s, coef * w.wm);
          wmap.add(flat, coef * w.w0);
          wmap.add(flat + s, coef * w.wp);
        }
        return val;
      };
      auto deriv2 = [&](int ax, double coef) {
        auto [hm, hp] = spacing(ax);
        const Stencil3 w = second_weights(hm, hp);
        const std::size_t s = strides[static_cast<std::size_t>(ax)];
        const double val =
            w.wm * grid.u[flat - s] + w.w0 * grid.u[flat] + w.wp * grid.u[flat + s];
        if (have_se && coef != 0.0) {
          wmap.add(flat - s, coef * w.wm);
          wmap.add(flat, coef * w.w0);
          wmap.add(flat + s, coef * w.wp);
        }
        return val;
      };
      auto cross = [&](int ax_a, int ax_b, double coef) {
        auto [ham, hap] = spacing(ax_a);
        auto [hbm, hbp] = spacing(ax_b);
        const Stencil3 wa = first_weights(ham, hap);
        const Stencil3 wb = first_weights(hbm, hbp);
        const std::size_t sa = strides[static_cast<std::size_t>(ax_a)];
        const std::size_t sb = strides[static_cast<std::size_t>(ax_b)];
        const double wav[3] = {wa.wm, wa.w0, wa.wp};
        const double wbv[3] = {wb.wm, wb.w0, wb.wp};
        double val = 0.0;
        for (int da = -1; da <= 1; ++da) {
          for (int db = -1; db <= 1; ++db) {
            const double w = wav[da + 1] * wbv[db + 1];
            if (w == 0.0) continue;
            const std::size_t at = static_cast<std::size_t>(
                static_cast<std::ptrdiff_t>(flat) + da * static_cast<std::ptrdiff_t>(sa) +
                db * static_cast<std::ptrdiff_t>(sb));
            val += w * grid.u[at];
            if (have_se && coef != 0.0) wmap.add(at, coef * w);
          }
        }
        return val;
      };

      const double d_tau = deriv1(0, 1.0);

      double block1 = 0.0, block2 = 0.0, block3 = 0.0, block4 = 0.0;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const double aij = a(i, j);
          if (aij != 0.0) {
            const double hess = (i == j) ? deriv2(1 + i, -0.5 * aij)
                                         : cross(1 + i, 1 + j, -0.5 * aij);
            const double dxi = deriv1(1 + i, -delta * aij / W);
            block1 += 0.5 * aij * (hess + 2.0 * delta * dxi / W);
          }
          const double pij = psi(i, j);
          if (pij != 0.0) {
            const double hess = (i == j) ? deriv2(1 + n + i, -0.5 * pij)
                                         : cross(1 + n + i, 1 + n + j, -0.5 * pij);
            const double dzp = deriv1(1 + n + i, -(1.0 - delta) * pij / W);
            block2 += 0.5 * pij * (hess + 2.0 * (1.0 - delta) * dzp / W);
          }
          const double st = stau(i, j);
          if (st != 0.0) {
            block3 += st * cross(1 + i, 1 + n + j, -st);
            const double dzp = deriv1(1 + n + j, -st * delta / W);
            const double dxi = deriv1(1 + i, -st * (1.0 - delta) / W);
            block4 += st * (delta * dzp + (1.0 - delta) * dxi) / W;
          }
        }
      }

      const double Au = block1 + block2 + block3 + block4;
      field.d_tau[flat] = d_tau;
      field.Au[flat] = Au;
      field.residual[flat] = d_tau - Au;
      field.scale[flat] = std::abs(d_tau) + std::abs(block1) + std::abs(block2) +
                          std::abs(block3) + std::abs(block4) + 1e-300;
      if (have_se) {
        KahanSum var;
        for (const auto& [at, w] : wmap.entries) {
          const double s = grid.stderr_[at];
          var.add(w * w * s * s);
        }
        field.tol[flat] = std::sqrt(var.value());
      }
      field.interior[flat] = 1;
    }

    // odometer increment
    for (int ax = axes - 1; ax >= 0; --ax) {
      if (++idx[static_cast<std::size_t>(ax)] < sizes[static_cast<std::size_t>(ax)]) break;
      idx[static_cast<std::size_t>(ax)] = 0;
    }
  }
  return field;
}

MinSolutionReport verify_min_solution(const ValueGrid& grid, const CoefficientSet& coeffs,
                                      double delta, double value_bound, double tol_mult) {
  grid.validate();
  const OperatorField field = apply_A(grid, coeffs, delta);
  const bool have_se = !grid.stderr_.empty();

  MinSolutionReport rep;
  rep.tol_mult = tol_mult;
  rep.nodes_checked = static_cast<long>(grid.u.size());
  for (std::size_t i = 0; i < grid.u.size(); ++i) {
    const double se = have_se ? grid.stderr_[i] : 0.0;
    const double upper = value_bound + tol_mult * se + 1e-12;
    if (!(grid.u[i] > 0.0) || grid.u[i] > upper) {
      ++rep.bound_violations;
      rep.worst_bound_gap = std::max(
          rep.worst_bound_gap,
          !(grid.u[i] > 0.0) ? std::abs(grid.u[i]) + 1e-12 : grid.u[i] - upper);
    }
  }

  std::vector<double> rel;
  for (std::size_t i = 0; i < field.residual.size(); ++i) {
    if (!field.interior[i]) continue;
    ++rep.interior_checked;
    rel.push_back(std::abs(field.residual[i]) / field.scale[i]);
    const double tol = tol_mult * field.tol[i] + 1e-12 * (1.0 + field.scale[i]);
    if (field.residual[i] < -tol) {
      ++rep.pde_violations;
      rep.worst_pde_gap = std::max(rep.worst_pde_gap, -(field.residual[i] + tol));
    }
  }
  rep.median_rel_residual = rel.empty() ? 0.0 : stats::median(rel);
  rep.pass = rep.bound_violations == 0 && rep.pde_violations == 0;
  return rep;
}

}  // namespace mfarb
