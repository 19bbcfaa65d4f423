#include "sc2ba/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <tuple>

#include "json.hpp"
#include "sc2ba/error.hpp"

namespace sc2ba {

namespace {

using nn::Matrix;
using nn::Vector;

// Dominant eigenpair of a symmetric positive semi-definite matrix.
std::pair<double, Vector> power_iteration(const Matrix& c) {
  const Eigen::Index d = c.rows();
  // Start from the column with the largest norm; it cannot be orthogonal to
  // the dominant direction unless the matrix is zero.
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < d; ++j) {
    if (c.col(j).squaredNorm() > c.col(best).squaredNorm()) best = j;
  }
  Vector v = c.col(best);
  if (v.norm() == 0) return {0.0, Vector::Unit(d, 0)};
  v.normalize();
  for (int it = 0; it < 100000; ++it) {
    Vector next = c * v;
    const double norm = next.norm();
    if (norm == 0) return {0.0, v};
    next /= norm;
    const double change = std::min((next - v).norm(), (next + v).norm());
    v = std::move(next);
    if (change < 1e-13) break;
  }
  return {v.dot(c * v), v};
}

void fix_sign(Eigen::Ref<Vector> v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > std::abs(v(arg)) + 1e-12) arg = i;
  }
  if (v(arg) < 0) v = -v;
}

struct WeightedPoint {
  Point2 p;
  double weight;
};

double dist(const Point2& a, const Point2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

// Distinct points in lexicographic order with multiplicities, plus the
// index of each input point's representative.
std::vector<WeightedPoint> unique_points(const std::vector<Point2>& points,
                                         std::vector<int>* index) {
  std::vector<int> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return points[a] < points[b]; });
  std::vector<WeightedPoint> out;
  if (index) index->assign(points.size(), -1);
  for (int i : order) {
    if (out.empty() || out.back().p != points[i]) out.push_back({points[i], 0.0});
    out.back().weight += 1;
    if (index) (*index)[i] = static_cast<int>(out.size()) - 1;
  }
  return out;
}

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

}  // namespace

Pca2d pca_2d(const Matrix& rows) {
  if (rows.rows() < 2 || rows.cols() < 2) {
    throw Error(ErrorCode::DegenerateData, "PCA needs at least 2 rows and 2 columns");
  }
  Pca2d out;
  out.mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - out.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(rows.rows() - 1);
  const double total = cov.trace();
  if (!(total > 0)) throw Error(ErrorCode::DegenerateData, "data has zero variance");

  out.components.resize(cov.rows(), 2);
  auto [l1, v1] = power_iteration(cov);
  fix_sign(v1);
  const Matrix deflated = cov - l1 * v1 * v1.transpose();
  auto [l2, v2] = power_iteration(deflated);
  // Keep the second direction exactly orthogonal to the first.
  v2 -= v1.dot(v2) * v1;
  if (v2.norm() < 1e-12) {
    // Rank-one data: any orthogonal direction carries zero variance.
    const Eigen::Index k = std::abs(v1(0)) < 0.9 ? 0 : 1;
    v2 = Vector::Unit(cov.rows(), k) - v1(k) * v1;
    l2 = 0;
  }
  v2.normalize();
  fix_sign(v2);
  out.components.col(0) = v1;
  out.components.col(1) = v2;
  out.explained_ratio = {std::clamp(l1 / total, 0.0, 1.0), std::clamp(std::max(l2, 0.0) / total, 0.0, 1.0)};
  const Matrix proj = centered * out.components;
  out.coords.resize(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.coords[i] = {proj(i, 0), proj(i, 1)};
  return out;
}

MeanShiftResult mean_shift(const std::vector<Point2>& points, double bandwidth) {
  if (!(bandwidth > 0)) throw Error(ErrorCode::DegenerateData, "bandwidth must be positive");
  MeanShiftResult out;
  if (points.empty()) return out;
  std::vector<int> rep;
  const std::vector<WeightedPoint> uniq = unique_points(points, &rep);
  const double stop = 1e-4 * bandwidth;

  std::vector<Point2> modes(uniq.size());
  for (std::size_t u = 0; u < uniq.size(); ++u) {
    Point2 x = uniq[u].p;
    for (int it = 1; it <= 10000; ++it) {
      double sx = 0, sy = 0, w = 0;
      for (const WeightedPoint& q : uniq) {
        if (dist(q.p, x) <= bandwidth) {
          sx += q.weight * q.p[0];
          sy += q.weight * q.p[1];
          w += q.weight;
        }
      }
      const Point2 next{sx / w, sy / w};
      const double moved = dist(next, x);
      x = next;
      out.iterations = std::max(out.iterations, it);
      if (moved < stop) break;
    }
    modes[u] = x;
  }

  // Merge modes closer than bandwidth / 2 (transitively).
  std::vector<int> parent(modes.size());
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t a = 0; a < modes.size(); ++a) {
    for (std::size_t b = a + 1; b < modes.size(); ++b) {
      if (dist(modes[a], modes[b]) < bandwidth / 2) {
        parent[find_root(parent, static_cast<int>(b))] = find_root(parent, static_cast<int>(a));
      }
    }
  }
  // Cluster ids follow the lexicographic order of the unique points, so the
  // partition and the labels are independent of input order.
  std::vector<int> cluster_of_root(modes.size(), -1);
  std::vector<int> cluster_of_unique(modes.size());
  std::vector<Point2> sum;
  std::vector<double> weight;
  for (std::size_t u = 0; u < modes.size(); ++u) {
    const int r = find_root(parent, static_cast<int>(u));
    if (cluster_of_root[r] < 0) {
      cluster_of_root[r] = static_cast<int>(sum.size());
      sum.push_back({0, 0});
      weight.push_back(0);
    }
    const int c = cluster_of_root[r];
    cluster_of_unique[u] = c;
    sum[c][0] += uniq[u].weight * modes[u][0];
    sum[c][1] += uniq[u].weight * modes[u][1];
    weight[c] += uniq[u].weight;
  }
  for (std::size_t c = 0; c < sum.size(); ++c) {
    out.modes.push_back({sum[c][0] / weight[c], sum[c][1] / weight[c]});
  }
  out.labels.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out.labels[i] = cluster_of_unique[rep[i]];
  return out;
}

double default_bandwidth(const std::vector<Point2>& points) {
  const std::vector<WeightedPoint> uniq = unique_points(points, nullptr);
  // Weighted pairwise distances: distinct pairs weigh w_a * w_b, coincident
  // pairs w (w - 1) / 2 at distance zero.
  std::vector<std::pair<double, double>> d;
  double zero = 0;
  for (std::size_t a = 0; a < uniq.size(); ++a) {
    zero += uniq[a].weight * (uniq[a].weight - 1) / 2;
    for (std::size_t b = a + 1; b < uniq.size(); ++b) {
      d.emplace_back(dist(uniq[a].p, uniq[b].p), uniq[a].weight * uniq[b].weight);
    }
  }
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  double nonzero = 0;
  for (const auto& e : d) nonzero += e.second;
  // Median of all pairs when fewer than half coincide, else of the distinct
  // pairs only.
  const double skip = zero < (zero + nonzero) / 2 ? zero : 0.0;
  const double half = (skip + nonzero) / 2;
  double acc = skip;
  for (const auto& e : d) {
    acc += e.second;
    if (acc >= half) return 0.5 * e.first;
  }
  return 0.5 * d.back().first;
}

JointActionLog joint_actions_from_replay(const std::vector<ReplayStep>& steps, Team team,
                                         int n_actions) {
  JointActionLog log;
  log.n_actions = n_actions;
  for (const ReplayStep& s : steps) {
    const auto& a = team == Team::Red ? s.red_actions : s.blue_actions;
    log.n_agents = std::max(log.n_agents, static_cast<int>(a.size()));
    log.rows.push_back(a);
  }
  for (auto& row : log.rows) row.resize(log.n_agents, kPaddingAction);
  return log;
}

DiversityReport action_diversity(const JointActionLog& log, double bandwidth) {
  if (log.rows.empty() || log.n_agents <= 0 || log.n_actions <= 0) {
    throw Error(ErrorCode::DegenerateData, "empty joint action log");
  }
  const int width = log.n_agents * log.n_actions;
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(log.rows.size()), width);
  for (std::size_t r = 0; r < log.rows.size(); ++r) {
    const auto& row = log.rows[r];
    if (static_cast<int>(row.size()) != log.n_agents) {
      throw Error(ErrorCode::ShapeMismatch, "joint action row has the wrong width");
    }
    for (int i = 0; i < log.n_agents; ++i) {
      if (row[i] == kPaddingAction) continue;
      if (row[i] < 0 || row[i] >= log.n_actions) {
        throw Error(ErrorCode::ShapeMismatch, "action code " + std::to_string(row[i]) +
                                                  " outside the action space");
      }
      x(static_cast<Eigen::Index>(r), i * log.n_actions + row[i]) = 1.0;
    }
  }
  DiversityReport report;
  const bool constant = (x.rowwise() - x.row(0)).cwiseAbs().maxCoeff() == 0.0;
  if (constant || x.rows() < 2) {
    report.coords.assign(log.rows.size(), Point2{0, 0});
  } else {
    const Pca2d pca = pca_2d(x);
    report.coords = pca.coords;
    report.explained_ratio = pca.explained_ratio;
  }
  report.bandwidth = bandwidth > 0 ? bandwidth : default_bandwidth(report.coords);
  const MeanShiftResult ms = mean_shift(report.coords, report.bandwidth);
  report.labels = ms.labels;
  report.cluster_count = static_cast<int>(ms.modes.size());
  return report;
}

void write_diversity_report(std::ostream& out, const DiversityReport& r) {
  nlohmann::json j = {{"cluster_count", r.cluster_count},
                      {"explained_variance_ratio", {r.explained_ratio[0], r.explained_ratio[1]}},
                      {"bandwidth", r.bandwidth},
                      {"rows", r.coords.size()}};
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < r.coords.size(); ++i) {
    points.push_back({r.coords[i][0], r.coords[i][1], r.labels[i]});
  }
  j["points"] = std::move(points);
  out << j.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Aggregation

bool has_advantage(double leader, const std::vector<double>& others) {
  for (double v : others) {
    if (leader - v < kAdvantageMargin - 1e-12) return false;
  }
  return true;
}

RunSummary aggregate_runs(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw Error(ErrorCode::NoInputFiles, "no runs to aggregate");
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<RunMetrics>> groups;
  std::vector<Key> order;
  for (const RunMetrics& r : runs) {
    Key k{r.scenario, r.mode, r.algo_red, r.algo_blue};
    auto [it, fresh] = groups.try_emplace(k);
    if (fresh) order.push_back(k);
    it->second.push_back(r);
  }
  RunSummary s;
  for (const Key& k : order) {
    PairingSummary p;
    std::tie(p.scenario, p.mode, p.algo_red, p.algo_blue) = k;
    p.curve = median_win_rate(groups[k]);
    p.final_median = p.curve.empty() ? 0.0 : p.curve.back().median;
    s.pairings.push_back(std::move(p));
  }

  // Average of final medians over opponents, per (scenario, algorithm).
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
  std::vector<std::pair<std::string, std::string>> algo_order;
  for (const PairingSummary& p : s.pairings) {
    auto key = std::make_pair(p.scenario, p.algo_red);
    auto [it, fresh] = acc.try_emplace(key, 0.0, 0);
    if (fresh) algo_order.push_back(key);
    it->second.first += p.final_median;
    it->second.second += 1;
  }
  std::map<std::string, std::vector<const AlgorithmScore*>> by_scenario;
  for (const auto& key : algo_order) {
    const auto& [sum, n] = acc[key];
    s.scores.push_back({key.first, key.second, sum / n, n});
  }
  for (const AlgorithmScore& a : s.scores) {
    by_scenario[a.scenario].push_back(&a);
    s.advantage.try_emplace(a.algorithm, 0);
  }
  for (const auto& [scenario, scores] : by_scenario) {
    for (const AlgorithmScore* a : scores) {
      std::vector<double> others;
      for (const AlgorithmScore* b : scores) {
        if (b != a) others.push_back(b->average_median);
      }
      if (!others.empty() && has_advantage(a->average_median, others)) ++s.advantage[a->algorithm];
    }
  }
  return s;
}

void write_pairings_csv(std::ostream& out, const RunSummary& s) {
  out << "scenario,mode,algo_red,algo_blue,env_step,median,mean,q1,q3,runs\n";
  for (const PairingSummary& p : s.pairings) {
    for (const AggregatePoint& a : p.curve) {
      out << p.scenario << ',' << p.mode << ',' << p.algo_red << ',' << p.algo_blue << ','
          << a.env_step << ',' << format_double(a.median) << ',' << format_double(a.mean) << ','
          << format_double(a.q1) << ',' << format_double(a.q3) << ',' << a.runs << '\n';
    }
  }
}

void write_scores_csv(std::ostream& out, const RunSummary& s) {
  out << "scenario,algorithm,average_median_win_rate,opponents,advantage_count\n";
  for (const AlgorithmScore& a : s.scores) {
    out << a.scenario << ',' << a.algorithm << ',' << format_double(a.average_median) << ','
        << a.opponents << ',' << s.advantage.at(a.algorithm) << '\n';
  }
}

void write_plot_data(std::ostream& out, const RunSummary& s) {
  out << "x,y,series\n";
  for (const PairingSummary& p : s.pairings) {
    const std::string series = p.scenario + "/" + p.mode + "/" + p.algo_red + "_vs_" + p.algo_blue;
    for (const AggregatePoint& a : p.curve) {
      out << a.env_step << ',' << format_double(a.median) << ',' << series << '\n';
    }
  }
}

std::string summary_json(const RunSummary& s) {
  nlohmann::json pairings = nlohmann::json::array();
  for (const PairingSummary& p : s.pairings) {
    nlohmann::json curve = nlohmann::json::array();
    for (const AggregatePoint& a : p.curve) {
      curve.push_back({{"env_step", a.env_step},
                       {"median", a.median},
                       {"mean", a.mean},
                       {"q1", a.q1},
                       {"q3", a.q3},
                       {"runs", a.runs}});
    }
    pairings.push_back({{"scenario", p.scenario},
                        {"mode", p.mode},
                        {"algo_red", p.algo_red},
                        {"algo_blue", p.algo_blue},
                        {"final_median", p.final_median},
                        {"curve", std::move(curve)}});
  }
  nlohmann::json scores = nlohmann::json::array();
  for (const AlgorithmScore& a : s.scores) {
    scores.push_back({{"scenario", a.scenario},
                      {"algorithm", a.algorithm},
                      {"average_median", a.average_median},
                      {"opponents", a.opponents}});
  }
  nlohmann::json j = {{"pairings", pairings}, {"scores", scores}, {"advantage", s.advantage}};
  return j.dump(2);
}

}  // namespace sc2ba
