#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mfje/error.hpp"
#include "mfje/kernel.hpp"
#include "mfje/metrics.hpp"

namespace mfje {

namespace {

// Jump law at one probe: either exact atoms, or a sample of jumps.
struct JumpLaw {
  double rate = 0.0;
  std::size_t dim = 1;
  std::vector<double> jumps;  // flat
  std::vector<double> weights;
};

JumpLaw jump_law(const IntensityKernel& k, const Probe& p, const AuditOptions& opt, std::uint64_t stream) {
  JumpLaw law;
  law.dim = k.space.dim();
  if (k.mark_atoms) {
    JumpAtoms atoms(law.dim);
    k.mark_atoms(p.t, p.x, p.rho, atoms);
    law.rate = atoms.total_rate();
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (atoms.rate(i) <= 0.0) continue;
      auto z = atoms.jump(i);
      law.jumps.insert(law.jumps.end(), z.begin(), z.end());
      law.weights.push_back(atoms.rate(i) / law.rate);
    }
    return law;
  }
  law.rate = k.rate(p.t, p.x, p.rho);
  if (law.rate <= 0.0) return law;
  const std::size_t s = std::max<std::size_t>(1, opt.samples_per_probe);
  const double w = 1.0 / static_cast<double>(s);
  Rng rng = Rng::stream(opt.seed, {0xa0d17, stream});
  for (std::size_t i = 0; i < s; ++i) {
    // Quantile kernels are sampled on a stratified u-grid.
    const Point z = k.mark_quantile ? k.mark_quantile(p.t, p.x, p.rho, (static_cast<double>(i) + 0.5) * w)
                                    : k.mark_sampler(p.t, p.x, p.rho, rng);
    law.jumps.insert(law.jumps.end(), z.begin(), z.end());
    law.weights.push_back(w);
  }
  return law;
}

// d_KR^0 between two jump measures: pad both with mass at 0 up to the common
// total M and take M times the W1 distance of the padded probability laws.
double kr0_distance(const JumpLaw& a, const JumpLaw& b, const AuditOptions& opt, std::uint64_t stream) {
  const double m = std::max(a.rate, b.rate);
  if (m <= 0.0) return 0.0;
  const std::size_t d = a.dim;
  auto padded = [&](const JumpLaw& l) {
    std::vector<double> coords = l.jumps;
    std::vector<double> w;
    for (double v : l.weights) w.push_back(v * l.rate / m);
    coords.insert(coords.end(), d, 0.0);
    w.push_back(std::max(0.0, 1.0 - l.rate / m));
    double total = 0.0;
    for (double v : w) total += v;
    for (double& v : w) v /= total;
    return MeasureSnapshot::cloud(d, std::move(coords), std::move(w));
  };
  const auto pa = padded(a), pb = padded(b);
  if (d == 1) {
    std::vector<double> wa(pa.size()), wb(pb.size());
    for (std::size_t i = 0; i < wa.size(); ++i) wa[i] = pa.weight(i);
    for (std::size_t i = 0; i < wb.size(); ++i) wb[i] = pb.weight(i);
    return m * w1_1d(pa.coordinates(), pb.coordinates(), wa, wb);
  }
  const auto sa = subsample_cloud(pa, opt.transport_cap, opt.seed ^ stream);
  const auto sb = subsample_cloud(pb, opt.transport_cap, opt.seed ^ (stream + 1));
  return m * w1_empirical_rd(sa, sb, opt.transport_cap);
}

double moment(const JumpLaw& l, double q) {
  if (l.rate <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (std::size_t i = 0; i < l.weights.size(); ++i)
    s += l.weights[i] * std::pow(l1_norm({l.jumps.data() + i * l.dim, l.dim}), q);
  return s;
}

}  // namespace

AuditReport audit_regularity(const IntensityKernel& kernel, std::span<const Probe> probes,
                             std::span<const ProbePair> pairs, const AuditOptions& options) {
  if (probes.empty() && pairs.empty()) throw InvalidArgument("kernel", "audit_regularity needs a nonempty probe set");
  AuditReport report;
  const auto& b = kernel.bounds;

  for (std::size_t i = 0; i < probes.size(); ++i) {
    const Probe& p = probes[i];
    const JumpLaw law = jump_law(kernel, p, options, i);
    const double mq = moment(law, b.q);
    report.rates.push_back(law.rate);
    report.moments.push_back(mq);
    report.max_rate = std::max(report.max_rate, law.rate);
    if (!std::isnan(mq)) report.max_moment = std::max(report.max_moment, mq);

    if (law.rate > b.c_lambda * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "rate " << law.rate << " exceeds C_lambda " << b.c_lambda << " at t=" << p.t;
      report.violations.push_back({AuditViolation::Kind::rate_bound, i, law.rate, b.c_lambda, os.str()});
    }
    if (!std::isnan(mq) && mq > b.c_r * (1.0 + options.moment_slack)) {
      std::ostringstream os;
      os << "mean |z|^" << b.q << " = " << mq << " exceeds C_r " << b.c_r;
      report.violations.push_back({AuditViolation::Kind::moment_bound, i, mq, b.c_r, os.str()});
    }

    // Finite spaces: every jump must land in E.
    if (kernel.space.is_finite() && law.rate > 0.0) {
      std::size_t escaping = 0;
      Point y(kernel.space.dim());
      auto check = [&](PointView z) {
        for (std::size_t c = 0; c < y.size(); ++c) y[c] = p.x[c] + z[c];
        if (!kernel.space.contains(y)) ++escaping;
      };
      if (kernel.mark_atoms) {
        for (std::size_t a = 0; a < law.weights.size(); ++a) check({law.jumps.data() + a * law.dim, law.dim});
      }
      // Sampled check on the sampler path as well; atoms alone can hide a
      // sampler that disagrees with them.
      if (kernel.mark_sampler) {
        Rng rng = Rng::stream(options.seed, {0xe5ca9e, i});
        for (std::size_t s = 0; s < options.samples_per_probe; ++s) check(kernel.mark_sampler(p.t, p.x, p.rho, rng));
      }
      if (escaping > 0) {
        report.escaping_jumps += escaping;
        std::ostringstream os;
        os << escaping << " sampled jumps leave the state space from x=(";
        for (std::size_t c = 0; c < p.x.size(); ++c) os << (c ? "," : "") << p.x[c];
        os << ")";
        report.violations.push_back(
            {AuditViolation::Kind::jump_outside_space, i, static_cast<double>(escaping), 0.0, os.str()});
      }
    }
  }

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const ProbePair& pp = pairs[i];
    const JumpLaw la = jump_law(kernel, pp.a, options, 1000003 + 2 * i);
    const JumpLaw lb = jump_law(kernel, pp.b, options, 1000004 + 2 * i);
    const double num = kr0_distance(la, lb, options, 2000003 + 2 * i);
    const double den = l1_distance(pp.a.x, pp.b.x) + snapshot_distance(kernel.space, pp.a.rho, pp.b.rho,
                                                                       options.transport_cap, options.seed + i);
    const double ratio = den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
    report.lipschitz_ratios.push_back(ratio);
    if (!std::isnan(ratio)) report.max_lipschitz_ratio = std::max(report.max_lipschitz_ratio, ratio);
    if (b.c_mu && !std::isnan(ratio) && ratio > *b.c_mu * (1.0 + 1e-9)) {
      std::ostringstream os;
      os << "Lipschitz ratio " << ratio << " exceeds C_mu " << *b.c_mu;
      report.violations.push_back({AuditViolation::Kind::lipschitz_bound, i, ratio, *b.c_mu, os.str()});
    }
  }
  return report;
}

}  // namespace mfje
