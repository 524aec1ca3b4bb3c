#include "flowref/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "json.hpp"

namespace flowref {

Eigen::MatrixXd rmsd_matrix(const std::vector<PointSet>& generated,
                            const std::vector<PointSet>& references) {
  Eigen::MatrixXd m(references.size(), generated.size());
  for (std::size_t l = 0; l < references.size(); ++l)
    for (std::size_t k = 0; k < generated.size(); ++k)
      m(l, k) = kabsch_align(generated[k], references[l]).rmsd;
  return m;
}

namespace {

void require_nonempty(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() == 0 || matrix.cols() == 0)
    throw std::invalid_argument("metrics: empty ensemble");
}

}  // namespace

double coverage_recall(const Eigen::MatrixXd& matrix, double delta) {
  require_nonempty(matrix);
  Eigen::Index covered = 0;
  for (Eigen::Index l = 0; l < matrix.rows(); ++l)
    if (matrix.row(l).minCoeff() < delta) ++covered;
  return 100.0 * static_cast<double>(covered) / static_cast<double>(matrix.rows());
}

double amr_recall(const Eigen::MatrixXd& matrix) {
  require_nonempty(matrix);
  double sum = 0.0;
  for (Eigen::Index l = 0; l < matrix.rows(); ++l)
    sum += matrix.row(l).minCoeff();
  return sum / static_cast<double>(matrix.rows());
}

double coverage_precision(const Eigen::MatrixXd& matrix, double delta) {
  return coverage_recall(matrix.transpose(), delta);
}

double amr_precision(const Eigen::MatrixXd& matrix) {
  return amr_recall(matrix.transpose());
}

std::vector<double> precision_rmsd_per_conformer(const Eigen::MatrixXd& matrix) {
  require_nonempty(matrix);
  std::vector<double> mins(matrix.cols());
  for (Eigen::Index k = 0; k < matrix.cols(); ++k)
    mins[k] = matrix.col(k).minCoeff();
  return mins;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean_of: empty input");
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median_of: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EnsembleReport build_ensemble_report(const std::vector<std::string>& ids,
                                     const std::vector<Eigen::MatrixXd>& matrices,
                                     double delta, const std::string& steps_label) {
  if (ids.size() != matrices.size())
    throw std::invalid_argument("ensemble report: id/matrix count mismatch");
  if (ids.empty()) throw std::invalid_argument("ensemble report: no molecules");

  EnsembleReport report;
  report.delta = delta;
  report.steps_label = steps_label;
  std::vector<double> cov_r, amr_r, cov_p, amr_p;
  for (std::size_t m = 0; m < ids.size(); ++m) {
    MoleculeMetrics row;
    row.id = ids[m];
    row.cov_r = coverage_recall(matrices[m], delta);
    row.amr_r = amr_recall(matrices[m]);
    row.cov_p = coverage_precision(matrices[m], delta);
    row.amr_p = amr_precision(matrices[m]);
    row.n_references = matrices[m].rows();
    row.n_generated = matrices[m].cols();
    report.per_molecule.push_back(row);
    cov_r.push_back(row.cov_r);
    amr_r.push_back(row.amr_r);
    cov_p.push_back(row.cov_p);
    amr_p.push_back(row.amr_p);
  }
  report.cov_r = {mean_of(cov_r), median_of(cov_r)};
  report.amr_r = {mean_of(amr_r), median_of(amr_r)};
  report.cov_p = {mean_of(cov_p), median_of(cov_p)};
  report.amr_p = {mean_of(amr_p), median_of(amr_p)};
  return report;
}

IrDrTable improvement_downgrade(const std::vector<double>& before,
                                const std::vector<double>& after,
                                const std::vector<double>& taus) {
  if (before.size() != after.size())
    throw std::invalid_argument("improvement_downgrade: pairing length mismatch");
  IrDrTable table;
  for (double tau : taus) {
    IrDrRow row;
    row.tau = tau;
    row.n_pairs = before.size();
    if (!before.empty()) {
      std::size_t improved = 0, downgraded = 0;
      for (std::size_t k = 0; k < before.size(); ++k) {
        if (before[k] - after[k] > tau) ++improved;
        else if (after[k] - before[k] > tau) ++downgraded;
      }
      row.improvement_rate = 100.0 * static_cast<double>(improved) /
                             static_cast<double>(before.size());
      row.downgrade_rate = 100.0 * static_cast<double>(downgraded) /
                           static_cast<double>(before.size());
    }
    table.push_back(row);
  }
  return table;
}

namespace {

nlohmann::json stat_json(const MetricStat& s) {
  return {{"mean", s.mean}, {"median", s.median}};
}

}  // namespace

void write_report_json(const std::filesystem::path& path, const EnsembleReport& report) {
  nlohmann::json j;
  j["delta"] = report.delta;
  if (!report.steps_label.empty()) j["steps"] = report.steps_label;
  j["recall"] = {{"cov", stat_json(report.cov_r)}, {"amr", stat_json(report.amr_r)}};
  j["precision"] = {{"cov", stat_json(report.cov_p)}, {"amr", stat_json(report.amr_p)}};
  // Slots for externally computed ensemble properties (energies, dipole,
  // HOMO-LUMO gap); this toolkit never fills them itself.
  j["external_properties"] = nlohmann::json::object();
  nlohmann::json rows = nlohmann::json::array();
  for (const MoleculeMetrics& m : report.per_molecule) {
    rows.push_back({{"id", m.id},
                    {"cov_r", m.cov_r},
                    {"amr_r", m.amr_r},
                    {"cov_p", m.cov_p},
                    {"amr_p", m.amr_p},
                    {"n_references", m.n_references},
                    {"n_generated", m.n_generated}});
  }
  j["per_molecule"] = std::move(rows);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << j.dump(2) << '\n';
}

void write_report_csv(const std::filesystem::path& path, const EnsembleReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << "steps,delta,cov_r_mean,cov_r_median,amr_r_mean,amr_r_median,"
         "cov_p_mean,cov_p_median,amr_p_mean,amr_p_median\n";
  out << (report.steps_label.empty() ? "-" : report.steps_label) << ','
      << std::setprecision(6) << std::fixed << report.delta << ','
      << report.cov_r.mean << ',' << report.cov_r.median << ','
      << report.amr_r.mean << ',' << report.amr_r.median << ','
      << report.cov_p.mean << ',' << report.cov_p.median << ','
      << report.amr_p.mean << ',' << report.amr_p.median << '\n';
}

void write_irdr_csv(const std::filesystem::path& path, const IrDrTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write table: " + path.string());
  out << "tau,improvement_rate,downgrade_rate,n_pairs\n";
  out << std::setprecision(6) << std::fixed;
  for (const IrDrRow& row : table)
    out << row.tau << ',' << row.improvement_rate << ',' << row.downgrade_rate
        << ',' << row.n_pairs << '\n';
}

}  // namespace flowref
