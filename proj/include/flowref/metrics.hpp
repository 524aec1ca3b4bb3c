#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowref/geom.hpp"

namespace flowref {

/// L x K matrix of Kabsch-aligned RMSD values; row l = reference conformer,
/// column k = generated conformer.
Eigen::MatrixXd rmsd_matrix(const std::vector<PointSet>& generated,
                            const std::vector<PointSet>& references);

/// Percent of reference rows whose best match beats delta (strict <).
double coverage_recall(const Eigen::MatrixXd& matrix, double delta);
/// Mean over references of the best generated match (row minima), Angstrom.
double amr_recall(const Eigen::MatrixXd& matrix);
/// Recall metrics with the roles swapped: column minima over references.
double coverage_precision(const Eigen::MatrixXd& matrix, double delta);
double amr_precision(const Eigen::MatrixXd& matrix);

/// Per generated conformer, its distance to the closest reference
/// (column minima); the per-conformer quality used for pairing comparisons.
std::vector<double> precision_rmsd_per_conformer(const Eigen::MatrixXd& matrix);

struct MetricStat {
  double mean = 0.0;
  double median = 0.0;
};

struct MoleculeMetrics {
  std::string id;
  double cov_r = 0.0, amr_r = 0.0, cov_p = 0.0, amr_p = 0.0;
  Eigen::Index n_references = 0, n_generated = 0;
};

struct EnsembleReport {
  double delta = 0.75;
  std::string steps_label;  // e.g. "20+20"; empty when unknown
  MetricStat cov_r, amr_r, cov_p, amr_p;
  std::vector<MoleculeMetrics> per_molecule;
};

EnsembleReport build_ensemble_report(const std::vector<std::string>& ids,
                                     const std::vector<Eigen::MatrixXd>& matrices,
                                     double delta,
                                     const std::string& steps_label = "");

struct IrDrRow {
  double tau = 0.0;
  double improvement_rate = 0.0;  // percent of pairs with before - after > tau
  double downgrade_rate = 0.0;    // percent of pairs with after - before > tau
  std::size_t n_pairs = 0;
};

using IrDrTable = std::vector<IrDrRow>;

/// One-to-one paired before/after per-conformer RMSD lists against a list of
/// tolerances tau (Angstrom).
IrDrTable improvement_downgrade(const std::vector<double>& before,
                                const std::vector<double>& after,
                                const std::vector<double>& taus);

double mean_of(const std::vector<double>& values);
double median_of(std::vector<double> values);

void write_report_json(const std::filesystem::path& path, const EnsembleReport& report);
void write_report_csv(const std::filesystem::path& path, const EnsembleReport& report);
void write_irdr_csv(const std::filesystem::path& path, const IrDrTable& table);

}  // namespace flowref
