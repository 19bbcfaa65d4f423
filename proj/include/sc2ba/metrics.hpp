#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "sc2ba/adversary.hpp"
#include "sc2ba/nn.hpp"

namespace sc2ba {

using Point2 = std::array<double, 2>;

struct Pca2d {
  std::vector<Point2> coords;       // one per input row
  Point2 explained_ratio{0, 0};     // variance share of each component
  nn::Matrix components;            // columns = principal directions
  nn::Vector mean;
};

// Top two principal components by power iteration with deflation. Each
// direction's largest-magnitude loading is made positive. Throws
// DegenerateData with fewer than 2 rows or columns, or zero variance.
Pca2d pca_2d(const nn::Matrix& rows);

struct MeanShiftResult {
  std::vector<int> labels;  // per input point, 0-based
  std::vector<Point2> modes;
  int iterations = 0;       // most iterations any point needed
};

// Flat-kernel mean shift: each point moves to the mean of the points within
// `bandwidth` until it moves less than 1e-4 * bandwidth; modes closer than
// bandwidth / 2 are merged. Labels do not depend on input order beyond
// renaming.
MeanShiftResult mean_shift(const std::vector<Point2>& points, double bandwidth);

// 0.5 x the median pairwise distance, or of the non-zero distances when most
// points coincide; 1 when all points coincide.
double default_bandwidth(const std::vector<Point2>& points);

inline constexpr int kPaddingAction = -1;

struct JointActionLog {
  int n_agents = 0;
  int n_actions = 0;
  // One row per step, one code per agent (kPaddingAction = absent).
  std::vector<std::vector<int>> rows;
};

// Joint actions of every step in a replay (red or blue side).
JointActionLog joint_actions_from_replay(const std::vector<ReplayStep>& steps, Team team,
                                         int n_actions);

struct DiversityReport {
  std::vector<Point2> coords;
  std::vector<int> labels;
  int cluster_count = 0;
  Point2 explained_ratio{0, 0};
  double bandwidth = 0;
};

// One-hot rows -> pca_2d -> mean_shift. A log whose rows are all identical
// has no variance; it is reported as one cluster at the origin with zero
// explained variance. bandwidth <= 0 selects default_bandwidth.
DiversityReport action_diversity(const JointActionLog& log, double bandwidth = 0);
void write_diversity_report(std::ostream& out, const DiversityReport& report);

inline constexpr double kAdvantageMargin = 1.0 / 32;

struct PairingSummary {
  std::string scenario;
  std::string mode;
  std::string algo_red;
  std::string algo_blue;
  std::vector<AggregatePoint> curve;
  double final_median = 0;
};

struct AlgorithmScore {
  std::string scenario;
  std::string algorithm;
  // Mean over opponents (itself included) of the final median win rate.
  double average_median = 0;
  int opponents = 0;
};

struct RunSummary {
  std::vector<PairingSummary> pairings;
  std::vector<AlgorithmScore> scores;
  // Scenarios where the algorithm's average median beats every other by at
  // least kAdvantageMargin.
  std::map<std::string, int> advantage;
};

RunSummary aggregate_runs(const std::vector<RunMetrics>& runs);
// True iff `leader` beats every value in `others` by at least the margin.
bool has_advantage(double leader, const std::vector<double>& others);

void write_pairings_csv(std::ostream& out, const RunSummary& summary);
void write_scores_csv(std::ostream& out, const RunSummary& summary);
// Plot-ready long format: x, y, series.
void write_plot_data(std::ostream& out, const RunSummary& summary);
std::string summary_json(const RunSummary& summary);

}  // namespace sc2ba
