#include "mfarb/measures.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "mfarb/rng.hpp"
#include "mfarb/stats.hpp"

namespace mfarb {

namespace {

std::string fmt(double x) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  return std::string(buf, p);
}

long long lcm_capped(long long a, long long b, long long cap) {
  const long long g = std::gcd(a, b);
  const long long l = (a / g) * b;
  return l <= cap ? l : -1;
}

}  // namespace

EmpiricalMeasure EmpiricalMeasure::from_samples(const std::vector<double>& xs) {
  EmpiricalMeasure m;
  m.points.resize(static_cast<int>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) m.points(static_cast<int>(i), 0) = xs[i];
  return m;
}

double second_moment(const EmpiricalMeasure& m) {
  if (m.count() == 0) throw ConfigError("second moment of empty measure");
  double acc = 0.0;
  for (int i = 0; i < m.count(); ++i) acc += m.points.row(i).squaredNorm();
  return std::sqrt(acc / static_cast<double>(m.count()));
}

double w2_sorted_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("W2 of empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t na = a.size(), nb = b.size();
  // integrate (Fa^{-1} - Fb^{-1})^2 over the merged quantile grid
  double acc = 0.0;
  std::size_t ia = 0, ib = 0;
  double u = 0.0;
  while (ia < na && ib < nb) {
    const double next_a = static_cast<double>(ia + 1) / static_cast<double>(na);
    const double next_b = static_cast<double>(ib + 1) / static_cast<double>(nb);
    const double next = std::min(next_a, next_b);
    const double d = a[ia] - b[ib];
    acc += d * d * (next - u);
    u = next;
    if (next_a <= next) ++ia;
    if (next_b <= next) ++ib;
  }
  return std::sqrt(std::max(0.0, acc));
}

std::vector<int> solve_assignment(const Mat& cost, double* total_cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n || n == 0) throw ConfigError("assignment needs a square non-empty matrix");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Hungarian method with potentials; p[j] = row matched to column j (1-based).
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> match(static_cast<std::size_t>(n), -1);
  double total = 0.0;
  for (int j = 1; j <= n; ++j) {
    match[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    total += cost(p[static_cast<std::size_t>(j)] - 1, j - 1);
  }
  if (total_cost) *total_cost = total;
  return match;
}

namespace {

Mat replicate_rows(const Mat& pts, int factor) {
  Mat out(pts.rows() * factor, pts.cols());
  int r = 0;
  for (int i = 0; i < pts.rows(); ++i)
    for (int f = 0; f < factor; ++f) out.row(r++) = pts.row(i);
  return out;
}

double assignment_value(const Mat& pa, const Mat& pb) {
  const int n = static_cast<int>(pa.rows());
  Mat cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = (pa.row(i) - pb.row(j)).squaredNorm();
  double total = 0.0;
  solve_assignment(cost, &total);
  return std::sqrt(std::max(0.0, total / static_cast<double>(n)));
}

}  // namespace

double w2_assignment(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int assignment_cap) {
  if (a.dim() != b.dim()) throw ConfigError("W2 between measures of different dimension");
  if (a.count() == 0 || b.count() == 0) throw ConfigError("W2 of empty sample");
  if (a.count() == b.count()) {
    if (a.count() > assignment_cap) throw ConfigError("assignment exceeds budget");
    return assignment_value(a.points, b.points);
  }
  const long long l = lcm_capped(a.count(), b.count(), assignment_cap);
  if (l < 0) throw ConfigError("assignment exceeds budget for unequal counts");
  return assignment_value(replicate_rows(a.points, static_cast<int>(l / a.count())),
                          replicate_rows(b.points, static_cast<int>(l / b.count())));
}

double sliced_w2(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int projections,
                 std::uint64_t seed) {
  if (a.dim() != b.dim()) throw ConfigError("W2 between measures of different dimension");
  const int d = a.dim();
  stats::KahanSum acc;
  std::vector<double> dir(static_cast<std::size_t>(d));
  for (int k = 0; k < projections; ++k) {
    rng::fill_normals(seed, rng::Stream::Projection, static_cast<std::uint64_t>(k), 0, dir);
    double norm = 0.0;
    for (double c : dir) norm += c * c;
    norm = std::sqrt(norm);
    std::vector<double> pa(static_cast<std::size_t>(a.count()));
    std::vector<double> pb(static_cast<std::size_t>(b.count()));
    for (int i = 0; i < a.count(); ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += a.points(i, j) * dir[static_cast<std::size_t>(j)] / norm;
      pa[static_cast<std::size_t>(i)] = s;
    }
    for (int i = 0; i < b.count(); ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += b.points(i, j) * dir[static_cast<std::size_t>(j)] / norm;
      pb[static_cast<std::size_t>(i)] = s;
    }
    const double w = w2_sorted_1d(pa, pb);
    acc.add(w * w);
  }
  return std::sqrt(acc.value() / std::max(1, projections));
}

W2Result wasserstein2_ex(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                         const W2Options& opts) {
  if (a.dim() != b.dim()) throw ConfigError("W2 between measures of different dimension");
  if (a.count() == 0 || b.count() == 0) throw ConfigError("W2 of empty sample");
  W2Result r;
  if (a.dim() == 1) {
    std::vector<double> xa(a.points.data(), a.points.data() + a.count());
    std::vector<double> xb(b.points.data(), b.points.data() + b.count());
    r.value = w2_sorted_1d(std::move(xa), std::move(xb));
    r.exact = true;
    r.method = "sorted-1d";
    return r;
  }
  const bool equal = a.count() == b.count();
  const long long effective =
      equal ? a.count() : lcm_capped(a.count(), b.count(), opts.assignment_cap);
  if (effective > 0 && effective <= opts.assignment_cap) {
    r.value = w2_assignment(a, b, opts.assignment_cap);
    r.exact = true;
    r.method = "assignment";
    return r;
  }
  r.value = sliced_w2(a, b, opts.projections, opts.seed);
  r.exact = false;
  r.method = "sliced";
  return r;
}

double wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  return wasserstein2_ex(a, b).value;
}

void ConvergenceTable::write_csv(const std::filesystem::path& file) const {
  std::ofstream os(file);
  if (!os) throw ConfigError("cannot open " + file.string() + " for writing");
  os << "N,median_w2,mean_w2,stderr_w2,loglog_slope,spearman\n";
  for (const auto& row : rows)
    os << row.N << ',' << fmt(row.median_w2) << ',' << fmt(row.mean_w2) << ','
       << fmt(row.stderr_w2) << ',' << fmt(loglog_slope) << ',' << fmt(spearman_corr) << "\n";
}

ConvergenceTable chaos_experiment(const GameConfig& cfg, const CoefficientSet& coeffs,
                                  const StrategyRule& rule, const std::vector<int>& N_list,
                                  int M_ref, double dt, std::uint64_t seed, int replications,
                                  bool freeze_interaction, int workers) {
  if (N_list.empty()) throw ConfigError("chaos experiment needs at least one N");
  for (int N : N_list)
    if (N < 1 || N > M_ref) throw ConfigError("chaos experiment needs 1 <= N <= M_ref");

  ConvergenceTable table;
  table.replications = replications;
  table.samples.assign(N_list.size(), {});

  for (int r = 0; r < replications; ++r) {
    GameConfig cfg_r = cfg;
    cfg_r.seed = seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(r + 1));
    const std::vector<InvestorType> pool = draw_types(cfg_r, M_ref);

    SimOptions opts;
    opts.dt = dt;
    opts.workers = workers;
    opts.freeze_z = freeze_interaction;

    const TrajectoryRecord ref = simulate_mkv(cfg_r, coeffs, pool, rule, opts);
    const EmpiricalMeasure mu_ref =
        EmpiricalMeasure::from_samples({ref.V_final.data(), ref.V_final.data() + M_ref});

    for (std::size_t ni = 0; ni < N_list.size(); ++ni) {
      const int N = N_list[ni];
      // nested coupling: the N players are the first N reference particles,
      // on the same common-noise path
      const std::vector<InvestorType> players(pool.begin(), pool.begin() + N);
      const TrajectoryRecord run = simulate_nplayer(cfg_r, coeffs, players, rule, opts);
      const EmpiricalMeasure mu_n =
          EmpiricalMeasure::from_samples({run.V_final.data(), run.V_final.data() + N});
      table.samples[ni].push_back(wasserstein2(mu_n, mu_ref));
    }
  }

  std::vector<double> logN, logMed;
  for (std::size_t ni = 0; ni < N_list.size(); ++ni) {
    ChaosRow row;
    row.N = N_list[ni];
    row.median_w2 = stats::median(table.samples[ni]);
    row.mean_w2 = stats::mean(table.samples[ni]);
    row.stderr_w2 = stats::stderr_mean(table.samples[ni]);
    table.rows.push_back(row);
    logN.push_back(std::log(static_cast<double>(row.N)));
    logMed.push_back(std::log(std::max(row.median_w2, 1e-300)));
  }
  if (table.rows.size() >= 2) {
    table.loglog_slope = stats::ols_slope(logN, logMed);
    std::vector<double> Ns, meds;
    for (const auto& row : table.rows) {
      Ns.push_back(static_cast<double>(row.N));
      meds.push_back(row.median_w2);
    }
    table.spearman_corr = stats::spearman(Ns, meds);
  }
  return table;
}

}  // namespace mfarb
