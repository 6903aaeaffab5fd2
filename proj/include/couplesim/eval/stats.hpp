#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "couplesim/engine/types.hpp"

namespace couplesim::eval {

class StatsError : public std::invalid_argument {
 public:
  enum class Kind { LengthMismatch, EmptyInput, InvalidCounts };
  StatsError(Kind kind, const std::string& what) : std::invalid_argument(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Cohen's kappa, (p_o - p_e) / (1 - p_e), computed from integer counts so the
// only rounding is the final division. When p_e = 1 (both raters used one
// and the same label throughout) the ratio is 0/0; that case is defined as 1.
template <class Label>
double cohen_kappa(const std::vector<Label>& a, const std::vector<Label>& b) {
  if (a.size() != b.size()) throw StatsError(StatsError::Kind::LengthMismatch, "kappa: sequences differ in length");
  if (a.empty()) throw StatsError(StatsError::Kind::EmptyInput, "kappa: empty input");
  std::map<Label, std::uint64_t> ca, cb;
  std::uint64_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    if (a[i] == b[i]) ++agree;
  }
  std::uint64_t chance = 0;  // n^2 * p_e
  for (const auto& [label, n] : ca)
    if (auto it = cb.find(label); it != cb.end()) chance += n * it->second;
  const std::uint64_t n = a.size();
  const auto nn = n * n;
  if (chance == nn) return 1.0;
  return (static_cast<double>(n * agree) - static_cast<double>(chance)) /
         (static_cast<double>(nn) - static_cast<double>(chance));
}

struct StageMetrics {
  std::size_t support = 0;    // human labels of this stage
  std::size_t predicted = 0;  // system labels of this stage
  double kappa = 0;           // one-vs-rest
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  bool precision_undefined = false;  // never predicted; reported as 0
  bool recall_undefined = false;     // never in the human labels; reported as 0
};

struct AgreementReport {
  std::size_t n = 0;
  std::map<Stage, StageMetrics> per_stage;  // stages absent from both sequences are omitted
  double kappa_multiclass = 0;
  double kappa_weighted = 0;  // support-weighted mean of per-stage kappa
  double precision_weighted = 0;
  double recall_weighted = 0;
  double f1_weighted = 0;
};

// Human labels are ground truth. Weighted averages use human support.
AgreementReport per_stage_metrics(const std::vector<Stage>& system, const std::vector<Stage>& human);

struct ChiSquareResult {
  double statistic = 0;
  int dof = 1;
  double p = 1;
  bool degenerate = false;  // a row or column of the table sums to zero
};

// 2x2 test of success proportions between two groups. Yates' continuity
// correction subtracts min(0.5, |O-E|) from each deviation.
ChiSquareResult chi_square_2x2(std::int64_t success_a, std::int64_t total_a, std::int64_t success_b,
                               std::int64_t total_b, bool yates = true);

// Upper tail of the chi-square distribution: Q(dof/2, x/2).
double chi_square_p_value(double statistic, int dof);

}  // namespace couplesim::eval
