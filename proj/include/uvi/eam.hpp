#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "uvi/errors.hpp"
#include "uvi/gp.hpp"
#include "uvi/rng.hpp"

namespace uvi {

struct EamOptions {
  int initial_points = 0;  // 0 -> max(10, 2p); must be >= p + 2 when set
  int max_iterations = 60;
  double epsilon = 0.1;        // exploration probability
  double tolerance = 1e-4;     // stagnation tolerance, relative
  int multistart = 8;          // local searches per M-step
  int probes = 256;            // quasi-random EI probes per M-step
  std::uint64_t seed = 0;
  // Known point to seed the design with (replaces one space-filling
  // point); in region projections this is the estimate itself.
  std::optional<VectorXd> center;
  // Early stop once the incumbent reaches this value; used by tests
  // that only need to know whether a threshold is attainable.
  double stop_at_incumbent = std::numeric_limits<double>::infinity();
};

struct EamIterate {
  VectorXd x;
  double c_value = 0.0;
  double g_value = 0.0;
  double f_value = 0.0;
  double incumbent = -std::numeric_limits<double>::infinity();
  double ei = 0.0;  // EI at the chosen point (0 during initialization)
  bool exploration = false;
};

struct EamTrace {
  std::vector<EamIterate> iterates;
  int c_evaluations = 0;
  bool converged = false;
  bool budget_exhausted = false;
  bool early_stopped = false;

  void write_csv(std::ostream& os) const {
    const int p = iterates.empty() ? 0 : static_cast<int>(iterates.front().x.size());
    os << "iteration";
    for (int j = 1; j <= p; ++j) os << ",x" << j;
    os << ",c_value,incumbent,ei\n";
    char buf[64];
    for (std::size_t i = 0; i < iterates.size(); ++i) {
      os << i;
      const EamIterate& it = iterates[i];
      for (int j = 0; j < p; ++j) {
        std::snprintf(buf, sizeof buf, ",%.17g", it.x[j]);
        os << buf;
      }
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g", it.c_value, it.incumbent, it.ei);
      os << buf << "\n";
    }
  }
};

// Maximize f(x) subject to g(x) <= c(x) over a box; f and g cheap with
// gradients, c expensive.
struct EamProblem {
  std::function<double(const VectorXd&)> f;
  std::function<VectorXd(const VectorXd&)> grad_f;
  std::function<double(const VectorXd&)> g;
  std::function<VectorXd(const VectorXd&)> grad_g;
  std::function<double(const VectorXd&)> c;
};

struct EamResult {
  VectorXd x_best;
  double y_best = -std::numeric_limits<double>::infinity();
  bool feasible = false;
  bool no_feasible_point = false;
  EamTrace trace;
};

namespace eam_detail {

inline double halton(std::uint64_t index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % static_cast<std::uint64_t>(base));
    index /= static_cast<std::uint64_t>(base);
  }
  return r;
}

constexpr int kPrimes[9] = {2, 3, 5, 7, 11, 13, 17, 19, 23};

struct Evaluated {
  VectorXd x;
  double f = 0.0, g = 0.0, c = 0.0;
  bool feasible() const { return g <= c; }
};

struct SearchState {
  const EamProblem* prob;
  VectorXd lo, hi, width;
  std::vector<Evaluated> pts;
  GpModel gp;
  bool gp_ready = false;
  double y_star = -std::numeric_limits<double>::infinity();
  int best_at = -1;

  VectorXd clamp(VectorXd x) const {
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = std::clamp(x[j], lo[j], hi[j]);
    return x;
  }

  bool duplicate(const VectorXd& x) const {
    for (const Evaluated& e : pts) {
      double m = 0.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        m = std::max(m, std::fabs(x[j] - e.x[j]) / (1.0 + width[j]));
      }
      if (m < 1e-9) return true;
    }
    return false;
  }
};

inline double ei_at(const SearchState& st, const VectorXd& x) {
  double fv = st.prob->f(x);
  if (st.best_at < 0) {
    // No feasible point yet: rank by feasibility probability, f breaking
    // ties smoothly at a scale far below one probability unit.
    GpPrediction pred = gp_predict(st.gp, x);
    double gv = st.prob->g(x);
    double pf = pred.sd > 0.0 ? stats::normal_cdf(-(gv - pred.mean) / pred.sd)
                              : (gv <= pred.mean ? 1.0 : 0.0);
    return pf + 1e-9 * fv;
  }
  return expected_improvement(st.gp, x, fv, st.prob->g(x), st.y_star);
}

// Last surrogate-feasible point along [a, b], where a satisfies
// g <= predicted c and b does not.
inline VectorXd pull_to_surrogate(const SearchState& st, VectorXd a, VectorXd b) {
  for (int i = 0; i < 24; ++i) {
    VectorXd mid = 0.5 * (a + b);
    if (st.prob->g(mid) > gp_predict(st.gp, mid).mean) {
      b = mid;
    } else {
      a = mid;
    }
  }
  return a;
}

// Gradient ascent on EI from one start; backtracking line search with
// box projection. In the degenerate sd = 0 branch the surrogate reduces
// to the indicator of g <= c_L, so ascend f and pull back to the
// constraint along the segment.
inline VectorXd refine(const SearchState& st, VectorXd x, int iters) {
  double cur = ei_at(st, x);
  // When the region is much smaller than the box, far-out starts sit in
  // flat zero EI: the improvement factor is positive but the feasibility
  // probability underflows. Walking the segment toward the incumbent back
  // to the surrogate boundary restores a usable gradient.
  if (st.best_at >= 0 && !(cur > 0.0) && st.prob->f(x) > st.y_star &&
      st.prob->g(x) > gp_predict(st.gp, x).mean) {
    const VectorXd& anchor = st.pts[static_cast<std::size_t>(st.best_at)].x;
    if (!(st.prob->g(anchor) > gp_predict(st.gp, anchor).mean)) {
      x = pull_to_surrogate(st, anchor, x);
      cur = ei_at(st, x);
    }
  }
  const Eigen::Index p = x.size();
  double step0 = 0.05;
  for (int it = 0; it < iters; ++it) {
    GpPrediction pred = gp_predict_grad(st.gp, x);
    double fv = st.prob->f(x);
    double gv = st.prob->g(x);
    VectorXd dir(p);
    bool indicator = pred.sd <= 0.0;
    if (st.best_at >= 0 && fv <= st.y_star) {
      dir = st.prob->grad_f(x);  // subgradient: climb f until improvement exists
    } else if (indicator) {
      if (gv > pred.mean) break;  // infeasible by surrogate, EI locally 0
      dir = st.prob->grad_f(x);
    } else {
      double z = (gv - pred.mean) / pred.sd;
      double phi_tail = stats::normal_cdf(-z);
      double dens = stats::normal_pdf(z);
      VectorXd dz = (st.prob->grad_g(x) - pred.dmean) / pred.sd - (z / pred.sd) * pred.dsd;
      double u = st.best_at >= 0 ? fv - st.y_star : 1.0;
      dir = st.prob->grad_f(x) * phi_tail - u * dens * dz;
    }
    double norm = dir.norm();
    if (!(norm > 1e-14)) break;
    dir /= norm;
    bool accepted = false;
    double step = step0;
    for (int bt = 0; bt < 8; ++bt) {
      VectorXd xn = st.clamp(x + step * dir.cwiseProduct(st.width));
      if (indicator && st.prob->g(xn) > gp_predict(st.gp, xn).mean) {
        // Bisect back to the surrogate constraint boundary.
        VectorXd a = x, b = xn;
        for (int bis = 0; bis < 12; ++bis) {
          VectorXd mid = 0.5 * (a + b);
          if (st.prob->g(mid) > gp_predict(st.gp, mid).mean) {
            b = mid;
          } else {
            a = mid;
          }
        }
        xn = a;
      }
      double val = ei_at(st, xn);
      if (val > cur * (1.0 + 1e-12) + 1e-300) {
        x = xn;
        cur = val;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      step0 *= 0.25;
      if (step0 < 1e-6) break;
    }
  }
  return x;
}

}  // namespace eam_detail

inline EamResult eam_maximize(const EamProblem& prob, const VectorXd& lo, const VectorXd& hi,
                              const EamOptions& opts) {
  const Eigen::Index p = lo.size();
  if (hi.size() != p || p < 1) throw InvalidArgument("eam_maximize: bad box");
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(lo[j] < hi[j])) throw InvalidArgument("eam_maximize: empty box");
  }
  if (!(opts.epsilon >= 0.0 && opts.epsilon <= 1.0)) {
    throw InvalidArgument("eam_maximize: epsilon in [0,1]");
  }
  int k = opts.initial_points > 0 ? opts.initial_points
                                  : std::max(10, 2 * static_cast<int>(p));
  if (k < static_cast<int>(p) + 2) throw InvalidArgument("eam_maximize: need k >= p + 2");

  eam_detail::SearchState st;
  st.prob = &prob;
  st.lo = lo;
  st.hi = hi;
  st.width = hi - lo;

  EamResult result;
  EamTrace& trace = result.trace;

  rng::Stream init_stream = rng::Stream(opts.seed).substream("eam-init");
  rng::Stream mstep_stream = rng::Stream(opts.seed).substream("eam-mstep");

  auto record = [&](const VectorXd& x, double ei, bool exploration) {
    eam_detail::Evaluated e;
    e.x = x;
    e.f = prob.f(x);
    e.g = prob.g(x);
    e.c = prob.c(x);
    ++trace.c_evaluations;
    st.pts.push_back(e);
    if (e.feasible() && e.f > st.y_star) {
      st.y_star = e.f;
      st.best_at = static_cast<int>(st.pts.size()) - 1;
    }
    EamIterate it;
    it.x = x;
    it.c_value = e.c;
    it.g_value = e.g;
    it.f_value = e.f;
    it.incumbent = st.y_star;
    it.ei = ei;
    it.exploration = exploration;
    trace.iterates.push_back(it);
  };

  // Initialization: Latin hypercube, optionally with a known center.
  {
    int design_n = k;
    std::vector<VectorXd> design;
    if (opts.center) {
      design.push_back(st.clamp(*opts.center));
      --design_n;
    }
    auto lhs = rng::latin_hypercube(design_n, static_cast<int>(p), init_stream);
    for (const auto& u : lhs) {
      VectorXd x(p);
      for (Eigen::Index j = 0; j < p; ++j) x[j] = lo[j] + st.width[j] * u[static_cast<std::size_t>(j)];
      design.push_back(x);
    }
    for (const VectorXd& x : design) record(x, 0.0, false);
  }

  auto rebuild_gp = [&](bool full_search) {
    // Sentinel c values (infeasible-by-construction candidates) carry no
    // surface information; train only on finite evaluations.
    std::vector<int> keep;
    for (int i = 0; i < static_cast<int>(st.pts.size()); ++i) {
      if (std::isfinite(st.pts[static_cast<std::size_t>(i)].c)) keep.push_back(i);
    }
    const int L = static_cast<int>(keep.size());
    if (L < 2) return;
    MatrixXd xs(L, p);
    VectorXd ys(L);
    for (int i = 0; i < L; ++i) {
      xs.row(i) = st.pts[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])].x.transpose();
      ys[i] = st.pts[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])].c;
    }
    if (full_search || !st.gp_ready) {
      st.gp = gp_fit(xs, ys);
    } else {
      VectorXd beta = st.gp.beta;
      st.gp = gp_fit(xs, ys, &beta);
    }
    st.gp_ready = true;
  };

  std::uint64_t halton_offset = 1;
  int stagnant = 0;
  double last_y = st.y_star;

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    if (st.y_star >= opts.stop_at_incumbent) {
      trace.early_stopped = true;
      trace.converged = true;
      break;
    }
    // A-step: hyperparameter search every iteration up to L = 40, every
    // 5th afterwards; conditioning data always current.
    int L = static_cast<int>(st.pts.size());
    rebuild_gp(L <= 40 || (iter % 5 == 0));

    // M-step.
    VectorXd x_next;
    double chosen_ei = 0.0;
    bool guided = false;
    bool exploration = mstep_stream.uniform() < opts.epsilon;
    if (!st.gp_ready) exploration = true;
    if (!exploration) {
      VectorXd shift(p);
      for (Eigen::Index j = 0; j < p; ++j) shift[j] = mstep_stream.uniform();
      std::vector<std::pair<double, VectorXd>> probes;
      probes.reserve(static_cast<std::size_t>(opts.probes));
      for (int i = 0; i < opts.probes; ++i) {
        VectorXd x(p);
        for (Eigen::Index j = 0; j < p; ++j) {
          double u = eam_detail::halton(halton_offset + static_cast<std::uint64_t>(i),
                                        eam_detail::kPrimes[j % 9]) +
                     shift[j];
          u -= std::floor(u);
          x[j] = lo[j] + st.width[j] * u;
        }
        double ei = eam_detail::ei_at(st, x);
        if (st.best_at >= 0 && prob.f(x) <= st.y_star && ei != 0.0) {
          throw Error("eam_maximize: EI positive below the incumbent");
        }
        probes.emplace_back(ei, std::move(x));
      }
      halton_offset += static_cast<std::uint64_t>(opts.probes);
      std::sort(probes.begin(), probes.end(),
                [](const auto& a, const auto& b) { return a.first > b.first; });
      double best_ei = -1.0;
      for (int s = 0; s < opts.multistart && s < static_cast<int>(probes.size()); ++s) {
        VectorXd cand = eam_detail::refine(st, probes[static_cast<std::size_t>(s)].second, 40);
        double ei = eam_detail::ei_at(st, cand);
        if (ei > best_ei) {
          best_ei = ei;
          x_next = cand;
        }
      }
      chosen_ei = std::max(best_ei, 0.0);
      guided = true;
      if (!(best_ei > 0.0)) {
        exploration = true;  // surrogate sees no improvement anywhere
      }
    }
    if (exploration) {
      x_next.resize(p);
      for (Eigen::Index j = 0; j < p; ++j) x_next[j] = mstep_stream.uniform(lo[j], hi[j]);
      chosen_ei = 0.0;
    }
    for (int tries = 0; st.duplicate(x_next) && tries < 10; ++tries) {
      for (Eigen::Index j = 0; j < p; ++j) {
        x_next[j] = std::clamp(x_next[j] + 1e-5 * st.width[j] * mstep_stream.normal(), lo[j], hi[j]);
      }
    }

    // E-step.
    record(x_next, chosen_ei, exploration);

    double improvement = st.y_star - last_y;
    bool meaningful = std::isfinite(st.y_star) &&
                      (!std::isfinite(last_y) ||
                       improvement > opts.tolerance * (1.0 + std::fabs(st.y_star)));
    // An unlucky candidate is not evidence of convergence; an iteration
    // counts as stagnant only when the surrogate itself expected nothing
    // and the incumbent did not move. Random restarts never count, and
    // neither does the feasibility hunt before a first incumbent.
    if (meaningful) {
      stagnant = 0;
    } else if (guided && st.best_at >= 0 &&
               chosen_ei <= opts.tolerance * (1.0 + std::fabs(st.y_star))) {
      ++stagnant;
    }
    last_y = st.y_star;
    if (stagnant >= 3) {
      trace.converged = true;
      break;
    }
    if (iter == opts.max_iterations) trace.budget_exhausted = true;
  }

  if (st.best_at >= 0) {
    result.x_best = st.pts[static_cast<std::size_t>(st.best_at)].x;
    result.y_best = st.y_star;
    result.feasible = true;
  } else {
    // Least-infeasible point, flagged.
    double best_gap = std::numeric_limits<double>::infinity();
    for (const auto& e : st.pts) {
      double gap = e.g - e.c;
      if (gap < best_gap) {
        best_gap = gap;
        result.x_best = e.x;
        result.y_best = e.f;
      }
    }
    result.feasible = false;
    result.no_feasible_point = true;
  }
  return result;
}

}  // namespace uvi
