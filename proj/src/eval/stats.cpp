#include "couplesim/eval/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/gamma.hpp>

namespace couplesim::eval {

AgreementReport per_stage_metrics(const std::vector<Stage>& system, const std::vector<Stage>& human) {
  AgreementReport r;
  r.kappa_multiclass = cohen_kappa(system, human);  // validates lengths
  r.n = system.size();

  for (Stage s : kAllStages) {
    StageMetrics m;
    std::size_t tp = 0;
    std::vector<bool> sys_bin(r.n), hum_bin(r.n);
    for (std::size_t i = 0; i < r.n; ++i) {
      sys_bin[i] = system[i] == s;
      hum_bin[i] = human[i] == s;
      m.predicted += sys_bin[i];
      m.support += hum_bin[i];
      tp += sys_bin[i] && hum_bin[i];
    }
    if (m.predicted == 0 && m.support == 0) continue;
    m.kappa = cohen_kappa(sys_bin, hum_bin);
    m.precision_undefined = m.predicted == 0;
    m.recall_undefined = m.support == 0;
    m.precision = m.predicted ? static_cast<double>(tp) / m.predicted : 0.0;
    m.recall = m.support ? static_cast<double>(tp) / m.support : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.per_stage.emplace(s, m);
  }

  for (const auto& [stage, m] : r.per_stage) {
    const double w = static_cast<double>(m.support) / static_cast<double>(r.n);
    r.kappa_weighted += w * m.kappa;
    r.precision_weighted += w * m.precision;
    r.recall_weighted += w * m.recall;
    r.f1_weighted += w * m.f1;
  }
  return r;
}

double chi_square_p_value(double statistic, int dof) {
  if (dof <= 0) throw StatsError(StatsError::Kind::InvalidCounts, "chi-square: dof must be positive");
  if (statistic <= 0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, statistic / 2.0);
}

ChiSquareResult chi_square_2x2(std::int64_t success_a, std::int64_t total_a, std::int64_t success_b,
                               std::int64_t total_b, bool yates) {
  if (total_a <= 0 || total_b <= 0)
    throw StatsError(StatsError::Kind::InvalidCounts, "chi-square: totals must be positive");
  if (success_a < 0 || success_b < 0 || success_a > total_a || success_b > total_b)
    throw StatsError(StatsError::Kind::InvalidCounts, "chi-square: successes must lie in [0, total]");

  const double observed[2][2] = {{double(success_a), double(total_a - success_a)},
                                 {double(success_b), double(total_b - success_b)}};
  const double rows[2] = {double(total_a), double(total_b)};
  const double cols[2] = {double(success_a + success_b), double(total_a + total_b - success_a - success_b)};
  const double n = rows[0] + rows[1];

  ChiSquareResult r;
  if (cols[0] == 0 || cols[1] == 0) {
    r.degenerate = true;
    return r;
  }
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double expected = rows[i] * cols[j] / n;
      double dev = std::abs(observed[i][j] - expected);
      if (yates) dev -= std::min(0.5, dev);
      r.statistic += dev * dev / expected;
    }
  }
  r.p = chi_square_p_value(r.statistic, r.dof);
  return r;
}

}  // namespace couplesim::eval
