#include "flowref/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace flowref {

namespace {

constexpr double kPi = 3.14159265358979323846;

const std::array<std::string, 8> kSymbols = {"C", "N", "O", "H",
                                             "F", "S", "P", "Cl"};

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line,
                             const std::string& what) {
  std::ostringstream msg;
  msg << path.string() << ":" << line << ": " << what;
  throw std::runtime_error(msg.str());
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

double parse_double(const std::string& tok, const std::filesystem::path& path,
                    std::size_t line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(tok, &used);
  } catch (const std::exception&) {
    parse_fail(path, line, "not a number: '" + tok + "'");
  }
  if (used != tok.size())
    parse_fail(path, line, "trailing characters in number: '" + tok + "'");
  return value;
}

long parse_long(const std::string& tok, const std::filesystem::path& path,
                std::size_t line) {
  std::size_t used = 0;
  long value = 0;
  try {
    value = std::stol(tok, &used);
  } catch (const std::exception&) {
    parse_fail(path, line, "not an integer: '" + tok + "'");
  }
  if (used != tok.size())
    parse_fail(path, line, "trailing characters in integer: '" + tok + "'");
  return value;
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

int kind_from_symbol(const std::string& symbol) {
  for (std::size_t k = 0; k < kSymbols.size(); ++k)
    if (kSymbols[k] == symbol) return static_cast<int>(k);
  throw std::invalid_argument("unknown element symbol: " + symbol);
}

const std::string& symbol_from_kind(int kind) {
  if (kind < 0 || kind >= static_cast<int>(kSymbols.size()))
    throw std::invalid_argument("atom kind out of range: " + std::to_string(kind));
  return kSymbols[kind];
}

void MoleculeRecord::validate() const {
  graph.validate();
  if (references.empty())
    throw std::invalid_argument("molecule " + id + ": no reference conformers");
  for (const PointSet& ref : references)
    if (ref.n_atoms() != graph.n_atoms())
      throw std::invalid_argument("molecule " + id + ": reference atom count mismatch");
  if (!basin_labels.empty() && basin_labels.size() != references.size())
    throw std::invalid_argument("molecule " + id + ": basin label count mismatch");
}

void ToyDatasetSpec::validate() const {
  if (n_molecules < 0) throw std::invalid_argument("dataset spec: negative size");
  if (chain_min < 4)
    throw std::invalid_argument("dataset spec: chains need >= 4 atoms for a dihedral");
  if (chain_max < chain_min)
    throw std::invalid_argument("dataset spec: chain_max < chain_min");
  if (torsion_profile_deg.empty())
    throw std::invalid_argument("dataset spec: empty torsion profile");
  if (bond_length <= 0.0) throw std::invalid_argument("dataset spec: bond length <= 0");
  if (bond_angle_deg <= 0.0 || bond_angle_deg >= 180.0)
    throw std::invalid_argument("dataset spec: bond angle outside (0, 180)");
  if (jitter_std < 0.0) throw std::invalid_argument("dataset spec: negative jitter");
  if (n_references < 1) throw std::invalid_argument("dataset spec: need >= 1 reference");
}

double dihedral_angle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const Vec3 b1 = b - a;
  const Vec3 b2 = c - b;
  const Vec3 b3 = d - c;
  const Vec3 n1 = b1.cross(b2);
  const Vec3 n2 = b2.cross(b3);
  const Vec3 m1 = n1.cross(b2.normalized());
  return std::atan2(m1.dot(n2), n1.dot(n2));
}

namespace {

// Chain coordinates from internal coordinates: fixed bond length and angle,
// one torsion per atom past the third.
CoordMatrix build_chain(int n, double bond, double angle_rad,
                        const std::vector<double>& torsions_rad) {
  CoordMatrix x(n, 3);
  x.row(0) = Vec3(0, 0, 0).transpose();
  x.row(1) = Vec3(bond, 0, 0).transpose();
  x.row(2) =
      x.row(1) + bond * Vec3(-std::cos(angle_rad), std::sin(angle_rad), 0).transpose();
  for (int k = 3; k < n; ++k) {
    const Vec3 a = x.row(k - 3).transpose();
    const Vec3 b = x.row(k - 2).transpose();
    const Vec3 c = x.row(k - 1).transpose();
    const Vec3 bc = (c - b).normalized();
    const Vec3 normal = (b - a).cross(bc).normalized();
    const Vec3 inplane = normal.cross(bc);
    const double phi = torsions_rad[k - 3];
    const Vec3 dir = -bc * std::cos(angle_rad) +
                     std::sin(angle_rad) * (std::cos(phi) * inplane -
                                            std::sin(phi) * normal);
    x.row(k) = (c + bond * dir).transpose();
  }
  return x;
}

std::vector<double> assignment_torsions(long index, int n_dihedrals,
                                        const std::vector<double>& profile_rad) {
  std::vector<double> t(n_dihedrals);
  const long base = static_cast<long>(profile_rad.size());
  for (int d = 0; d < n_dihedrals; ++d) {
    t[d] = profile_rad[index % base];
    index /= base;
  }
  return t;
}

}  // namespace

std::vector<MoleculeRecord> synth_dataset(const ToyDatasetSpec& spec) {
  spec.validate();
  const double angle_rad = spec.bond_angle_deg * kPi / 180.0;
  std::vector<double> profile_rad;
  for (double deg : spec.torsion_profile_deg) profile_rad.push_back(deg * kPi / 180.0);

  RandomStream root(spec.seed);
  std::vector<MoleculeRecord> records;
  records.reserve(spec.n_molecules);

  for (int m = 0; m < spec.n_molecules; ++m) {
    RandomStream rng = root.derive(static_cast<std::uint64_t>(m));
    MoleculeRecord rec;
    {
      std::ostringstream id;
      id << spec.id_prefix << std::setw(3) << std::setfill('0') << m;
      rec.id = id.str();
    }

    const int n = spec.chain_min +
                  static_cast<int>(rng.integer(spec.chain_max - spec.chain_min + 1));
    for (int i = 0; i < n; ++i)
      rec.graph.atom_kinds.push_back(static_cast<int>(rng.integer(3)));  // C/N/O
    for (int i = 0; i + 1 < n; ++i) rec.graph.bonds.push_back({i, i + 1, 1});

    const int n_dihedrals = n - 3;
    long total = 1;
    for (int d = 0; d < n_dihedrals; ++d)
      total *= static_cast<long>(profile_rad.size());
    const int n_refs = static_cast<int>(std::min<long>(spec.n_references, total));

    // Distinct torsion assignments, chosen by seeded partial shuffle.
    std::vector<long> assignment_ids(total);
    std::iota(assignment_ids.begin(), assignment_ids.end(), 0);
    for (int k = 0; k < n_refs; ++k) {
      const long swap_with =
          k + static_cast<long>(rng.integer(assignment_ids.size() - k));
      std::swap(assignment_ids[k], assignment_ids[swap_with]);
    }

    for (int k = 0; k < n_refs; ++k) {
      const std::vector<double> torsions =
          assignment_torsions(assignment_ids[k], n_dihedrals, profile_rad);
      PointSet ref(build_chain(n, spec.bond_length, angle_rad, torsions));
      for (Eigen::Index i = 0; i < ref.coords.rows(); ++i)
        for (Eigen::Index c = 0; c < 3; ++c)
          ref.coords(i, c) += spec.jitter_std * rng.normal();
      rec.references.push_back(center(ref));
      rec.basin_labels.push_back(static_cast<int>(assignment_ids[k]));
    }

    // Basins must stay well separated relative to the jitter, otherwise
    // basin-preservation checks are meaningless.
    for (std::size_t a = 0; a < rec.references.size(); ++a)
      for (std::size_t b = a + 1; b < rec.references.size(); ++b) {
        const double sep = kabsch_align(rec.references[a], rec.references[b]).rmsd;
        if (sep <= 5.0 * spec.jitter_std)
          throw std::runtime_error("synth_dataset: basins of " + rec.id +
                                   " too close (" + std::to_string(sep) + " A)");
      }

    rec.validate();
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<XyzFrame> read_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open xyz file: " + path.string());

  std::vector<XyzFrame> frames;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (is_blank(line)) continue;  // tolerate blank separators between frames

    const std::vector<std::string> head = split_ws(line);
    if (head.size() != 1)
      parse_fail(path, lineno, "expected an atom count, got '" + line + "'");
    const long count = parse_long(head[0], path, lineno);
    if (count < 1) parse_fail(path, lineno, "atom count must be positive");

    XyzFrame frame;
    if (!std::getline(in, line))
      parse_fail(path, lineno + 1, "missing comment line");
    ++lineno;
    frame.comment = strip_cr(line);

    frame.points.coords.resize(count, 3);
    for (long i = 0; i < count; ++i) {
      if (!std::getline(in, line))
        parse_fail(path, lineno + 1, "truncated frame: expected " +
                                         std::to_string(count) + " atoms, got " +
                                         std::to_string(i));
      ++lineno;
      line = strip_cr(line);
      const std::vector<std::string> tok = split_ws(line);
      if (tok.size() != 4)
        parse_fail(path, lineno, "expected 'symbol x y z', got '" + line + "'");
      try {
        frame.kinds.push_back(kind_from_symbol(tok[0]));
      } catch (const std::invalid_argument& err) {
        parse_fail(path, lineno, err.what());
      }
      for (int c = 0; c < 3; ++c)
        frame.points.coords(i, c) = parse_double(tok[c + 1], path, lineno);
    }
    if (!frame.points.all_finite())
      parse_fail(path, lineno, "non-finite coordinate");
    frames.push_back(std::move(frame));
  }
  return frames;
}

void write_xyz(const std::filesystem::path& path, const std::vector<XyzFrame>& frames) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write xyz file: " + path.string());
  out << std::setprecision(10);  // 10 significant digits
  for (const XyzFrame& frame : frames) {
    if (static_cast<Eigen::Index>(frame.kinds.size()) != frame.points.n_atoms())
      throw std::invalid_argument("write_xyz: kind/coordinate count mismatch");
    out << frame.points.n_atoms() << '\n';
    std::string comment = frame.comment;
    std::replace(comment.begin(), comment.end(), '\n', ' ');
    out << comment << '\n';
    for (Eigen::Index i = 0; i < frame.points.n_atoms(); ++i)
      out << symbol_from_kind(frame.kinds[i]) << ' ' << frame.points.coords(i, 0)
          << ' ' << frame.points.coords(i, 1) << ' ' << frame.points.coords(i, 2)
          << '\n';
  }
}

MolecularGraph read_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file: " + path.string());

  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty graph file");
  ++lineno;
  if (strip_cr(line) != "# flowref-graph v1")
    parse_fail(path, lineno, "missing '# flowref-graph v1' header");

  MolecularGraph graph;
  long declared = -1;
  std::vector<bool> seen;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (is_blank(line) || line[0] == '#') continue;
    const std::vector<std::string> tok = split_ws(line);
    if (tok[0] == "atoms") {
      if (tok.size() != 2) parse_fail(path, lineno, "usage: atoms <count>");
      declared = parse_long(tok[1], path, lineno);
      if (declared < 1) parse_fail(path, lineno, "atom count must be positive");
      graph.atom_kinds.assign(declared, -1);
      seen.assign(declared, false);
    } else if (tok[0] == "atom") {
      if (tok.size() != 3) parse_fail(path, lineno, "usage: atom <index> <symbol>");
      if (declared < 0) parse_fail(path, lineno, "'atom' before 'atoms'");
      const long idx = parse_long(tok[1], path, lineno);
      if (idx < 0 || idx >= declared) parse_fail(path, lineno, "atom index out of range");
      if (seen[idx]) parse_fail(path, lineno, "duplicate atom index");
      try {
        graph.atom_kinds[idx] = kind_from_symbol(tok[2]);
      } catch (const std::invalid_argument& err) {
        parse_fail(path, lineno, err.what());
      }
      seen[idx] = true;
    } else if (tok[0] == "bond") {
      if (tok.size() != 4) parse_fail(path, lineno, "usage: bond <i> <j> <order>");
      if (declared < 0) parse_fail(path, lineno, "'bond' before 'atoms'");
      Bond b;
      b.i = static_cast<int>(parse_long(tok[1], path, lineno));
      b.j = static_cast<int>(parse_long(tok[2], path, lineno));
      b.order = static_cast<int>(parse_long(tok[3], path, lineno));
      graph.bonds.push_back(b);
    } else {
      parse_fail(path, lineno, "unknown directive '" + tok[0] + "'");
    }
  }
  if (declared < 0) parse_fail(path, lineno, "missing 'atoms' directive");
  for (long i = 0; i < declared; ++i)
    if (!seen[i])
      parse_fail(path, lineno, "atom " + std::to_string(i) + " not declared");
  try {
    graph.validate();
  } catch (const std::invalid_argument& err) {
    parse_fail(path, lineno, err.what());
  }
  return graph;
}

void write_graph(const std::filesystem::path& path, const MolecularGraph& graph) {
  graph.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write graph file: " + path.string());
  out << "# flowref-graph v1\n";
  out << "atoms " << graph.n_atoms() << '\n';
  for (int i = 0; i < graph.n_atoms(); ++i)
    out << "atom " << i << ' ' << symbol_from_kind(graph.atom_kinds[i]) << '\n';
  for (const Bond& b : graph.bonds)
    out << "bond " << b.i << ' ' << b.j << ' ' << b.order << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path.string());

  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty manifest");
  ++lineno;
  if (strip_cr(line) != "# flowref-manifest v1")
    parse_fail(path, lineno, "missing '# flowref-manifest v1' header");

  Manifest manifest;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (is_blank(line) || line[0] == '#') continue;
    const std::vector<std::string> tok = split_ws(line);
    if (tok[0] == "meta") {
      if (tok.size() < 3) parse_fail(path, lineno, "usage: meta <key> <value>");
      std::string value = tok[2];
      for (std::size_t k = 3; k < tok.size(); ++k) value += " " + tok[k];
      manifest.meta[tok[1]] = value;
    } else if (tok[0] == "molecule") {
      ManifestEntry entry;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const std::size_t eq = tok[k].find('=');
        if (eq == std::string::npos)
          parse_fail(path, lineno, "expected key=value, got '" + tok[k] + "'");
        const std::string key = tok[k].substr(0, eq);
        const std::string value = tok[k].substr(eq + 1);
        if (key == "id") entry.id = value;
        else if (key == "graph") entry.graph_file = value;
        else if (key == "refs") entry.refs_file = value;
        else if (key == "generated") entry.generated_file = value;
        else parse_fail(path, lineno, "unknown molecule key '" + key + "'");
      }
      if (entry.id.empty() || entry.graph_file.empty() || entry.refs_file.empty())
        parse_fail(path, lineno, "molecule line needs id=, graph=, refs=");
      manifest.entries.push_back(std::move(entry));
    } else {
      parse_fail(path, lineno, "unknown directive '" + tok[0] + "'");
    }
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  out << "# flowref-manifest v1\n";
  for (const auto& [key, value] : manifest.meta)
    out << "meta " << key << ' ' << value << '\n';
  for (const ManifestEntry& e : manifest.entries) {
    out << "molecule id=" << e.id << " graph=" << e.graph_file
        << " refs=" << e.refs_file;
    if (!e.generated_file.empty()) out << " generated=" << e.generated_file;
    out << '\n';
  }
}

namespace {

std::optional<int> parse_basin_comment(const std::string& comment) {
  std::istringstream in(comment);
  std::string tok;
  while (in >> tok)
    if (tok.rfind("basin=", 0) == 0) return std::stoi(tok.substr(6));
  return std::nullopt;
}

std::vector<PointSet> frames_to_points(const std::vector<XyzFrame>& frames,
                                       const MolecularGraph& graph,
                                       const std::string& molecule_id,
                                       const std::filesystem::path& file) {
  std::vector<PointSet> points;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].kinds != graph.atom_kinds)
      throw std::runtime_error("molecule " + molecule_id + ": frame " +
                               std::to_string(f) + " of " + file.string() +
                               " does not match the graph atoms");
    points.push_back(frames[f].points);
  }
  return points;
}

}  // namespace

EnsembleData read_ensemble_manifest(const std::filesystem::path& path) {
  const Manifest manifest = read_manifest(path);
  const std::filesystem::path base = path.parent_path();

  EnsembleData data;
  data.meta = manifest.meta;
  std::set<std::string> ids;
  for (const ManifestEntry& entry : manifest.entries) {
    if (!ids.insert(entry.id).second)
      throw std::runtime_error("duplicate molecule id in manifest: " + entry.id);

    LoadedEnsemble loaded;
    loaded.record.id = entry.id;
    loaded.record.graph = read_graph(base / entry.graph_file);

    const std::vector<XyzFrame> ref_frames = read_xyz(base / entry.refs_file);
    if (ref_frames.empty())
      throw std::runtime_error("molecule " + entry.id + ": no reference frames in " +
                               entry.refs_file);
    loaded.record.references = frames_to_points(ref_frames, loaded.record.graph,
                                                entry.id, base / entry.refs_file);
    std::vector<int> basins;
    for (const XyzFrame& f : ref_frames)
      if (auto basin = parse_basin_comment(f.comment)) basins.push_back(*basin);
    if (basins.size() == ref_frames.size()) loaded.record.basin_labels = basins;

    if (!entry.generated_file.empty()) {
      const std::vector<XyzFrame> gen_frames = read_xyz(base / entry.generated_file);
      loaded.generated = frames_to_points(gen_frames, loaded.record.graph, entry.id,
                                          base / entry.generated_file);
    }
    loaded.record.validate();
    data.molecules.push_back(std::move(loaded));
  }
  return data;
}

Manifest write_dataset(const std::filesystem::path& dir,
                       const std::vector<MoleculeRecord>& records) {
  std::filesystem::create_directories(dir);
  Manifest manifest;
  for (const MoleculeRecord& rec : records) {
    rec.validate();
    const std::string graph_file = rec.id + ".graph";
    const std::string refs_file = rec.id + "_refs.xyz";
    write_graph(dir / graph_file, rec.graph);

    std::vector<XyzFrame> frames;
    for (std::size_t k = 0; k < rec.references.size(); ++k) {
      XyzFrame frame;
      frame.kinds = rec.graph.atom_kinds;
      frame.points = rec.references[k];
      std::ostringstream comment;
      comment << "id=" << rec.id << " ref=" << k;
      if (!rec.basin_labels.empty()) comment << " basin=" << rec.basin_labels[k];
      frame.comment = comment.str();
      frames.push_back(std::move(frame));
    }
    write_xyz(dir / refs_file, frames);
    manifest.entries.push_back({rec.id, graph_file, refs_file, ""});
  }
  return manifest;
}

}  // namespace flowref
