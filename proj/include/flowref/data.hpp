#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowref/geom.hpp"
#include "flowref/model.hpp"

namespace flowref {

/// A molecule with its ground-truth conformer ensemble. basin_labels, when
/// present, identify the torsion basin each reference realizes.
struct MoleculeRecord {
  std::string id;
  MolecularGraph graph;
  std::vector<PointSet> references;
  std::vector<int> basin_labels;

  void validate() const;
};

/// Synthetic chain molecules with enumerable torsion basins: fixed bond
/// length and angle, one preferred-torsion assignment per reference
/// conformer, small Gaussian jitter on top.
struct ToyDatasetSpec {
  int n_molecules = 200;
  int chain_min = 4;
  int chain_max = 8;
  std::vector<double> torsion_profile_deg{-60.0, 60.0, 180.0};
  double bond_length = 1.5;     // Angstrom
  double bond_angle_deg = 109.5;
  double jitter_std = 0.05;     // Angstrom
  int n_references = 4;         // per molecule, capped by distinct assignments
  std::uint64_t seed = 0;
  std::string id_prefix = "mol";

  void validate() const;
};

std::vector<MoleculeRecord> synth_dataset(const ToyDatasetSpec& spec);

/// Signed dihedral angle (radians) of the chain a-b-c-d.
double dihedral_angle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

int kind_from_symbol(const std::string& symbol);
const std::string& symbol_from_kind(int kind);

struct XyzFrame {
  std::vector<int> kinds;
  PointSet points;
  std::string comment;
};

/// Multi-frame XYZ: count line, comment line, then element + 3 coordinates
/// per row. Coordinates are printed with 10 significant digits. Parse errors
/// carry the offending line number.
std::vector<XyzFrame> read_xyz(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, const std::vector<XyzFrame>& frames);

MolecularGraph read_graph(const std::filesystem::path& path);
void write_graph(const std::filesystem::path& path, const MolecularGraph& graph);

/// Manifest entry: one molecule's graph/reference files plus optionally an
/// upstream-generated ensemble. Paths are relative to the manifest location.
struct ManifestEntry {
  std::string id;
  std::string graph_file;
  std::string refs_file;
  std::string generated_file;  // empty when absent
};

struct Manifest {
  std::map<std::string, std::string> meta;
  std::vector<ManifestEntry> entries;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct LoadedEnsemble {
  MoleculeRecord record;
  std::vector<PointSet> generated;  // stable indices for one-to-one pairing
};

struct EnsembleData {
  std::map<std::string, std::string> meta;
  std::vector<LoadedEnsemble> molecules;
};

/// Loads and cross-validates everything a manifest points at: atom counts of
/// every frame against the graph, duplicate ids, missing files.
EnsembleData read_ensemble_manifest(const std::filesystem::path& path);

/// Writes records (graph + reference frames with basin comments) under dir
/// and returns the manifest describing them (paths relative to dir).
Manifest write_dataset(const std::filesystem::path& dir,
                       const std::vector<MoleculeRecord>& records);

}  // namespace flowref
