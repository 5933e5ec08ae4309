#include "laguerre/cli.hpp"

#include <omp.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace laguerre::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- numbers

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

// --------------------------------------------------------------- config

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
T get(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": missing or of the wrong type");
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  return get<T>(obj, key, where);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

SpatialSpec parse_spatial(const json& s, const RunConfig& c, bool& seed_given) {
  const std::string where = "seeds";
  check_keys(s,
             {"kind", "rng_seed", "band_axis", "regions", "layout", "gradient_axis",
              "gradient_centred", "positions"},
             where);
  SpatialSpec spec;
  spec.kind = spatial_kind_from_string(get_or<std::string>(s, "kind", "uniform", where));
  seed_given = s.contains("rng_seed");
  spec.rng_seed = get_or<std::uint64_t>(s, "rng_seed", 0, where);
  spec.band_axis = get_or<int>(s, "band_axis", 0, where);
  spec.gradient_axis = get_or<int>(s, "gradient_axis", 0, where);
  spec.gradient_centred = get_or<bool>(s, "gradient_centred", false, where);
  for (int axis : {spec.band_axis, spec.gradient_axis})
    if (axis < 0 || axis >= c.dimension) throw ConfigError(where + ": axis out of range");

  if (s.contains("regions")) {
    for (const json& r : s.at("regions")) {
      check_keys(r, {"bands", "discs", "random_fraction"}, where + ".regions");
      ClassRegion region;
      for (const json& b : r.value("bands", json::array())) {
        const auto v = b.get<std::vector<double>>();
        if (v.size() != 2) throw ConfigError(where + ".regions: a band is [lower, upper]");
        region.bands.push_back({v[0], v[1]});
      }
      for (const json& d : r.value("discs", json::array())) {
        check_keys(d, {"centre", "radius"}, where + ".regions.discs");
        Ball ball{get<std::vector<double>>(d, "centre", where), get<double>(d, "radius", where)};
        if (static_cast<int>(ball.centre.size()) != c.dimension)
          throw ConfigError(where + ".regions.discs: centre has the wrong dimension");
        region.discs.push_back(std::move(ball));
      }
      region.random_fraction = get_or<double>(r, "random_fraction", 0.0, where);
      spec.regions.push_back(std::move(region));
    }
  }
  if (s.contains("layout")) {
    if (!spec.regions.empty()) throw ConfigError(where + ": give either regions or layout");
    const json& l = s.at("layout");
    check_keys(l, {"type", "fractions", "repeats", "fraction", "random_fraction"},
               where + ".layout");
    const double lo = c.lower[spec.band_axis];
    const double hi = c.upper[spec.band_axis];
    const auto type = get<std::string>(l, "type", where + ".layout");
    if (type == "alternating") {
      const auto fractions = get<std::vector<double>>(l, "fractions", where + ".layout");
      spec.regions = alternating_bands(lo, hi, fractions, get_or<int>(l, "repeats", 1, where));
    } else if (type == "centred") {
      spec.regions = centred_band(lo, hi, get<double>(l, "fraction", where + ".layout"));
    } else {
      throw ConfigError(where + ".layout: unknown type '" + type + "'");
    }
    const double random = get_or<double>(l, "random_fraction", 0.0, where);
    for (auto& r : spec.regions) r.random_fraction = random;
  }
  if (s.contains("positions")) {
    spec.positions = s.at("positions").get<std::vector<std::vector<double>>>();
  }
  return spec;
}

VolumeSpec parse_volumes(const json& t) {
  const std::string where = "targets";
  check_keys(t, {"kind", "values", "n1", "n2", "ratio", "n", "mean", "sd", "max_ratio"}, where);
  VolumeSpec v;
  v.kind = volume_kind_from_string(get<std::string>(t, "kind", where));
  v.values = get_or<std::vector<double>>(t, "values", {}, where);
  v.n1 = get_or<int>(t, "n1", 0, where);
  v.n2 = get_or<int>(t, "n2", 0, where);
  v.ratio = get_or<double>(t, "ratio", 1.0, where);
  v.n = get_or<int>(t, "n", 0, where);
  v.mean = get_or<double>(t, "mean", 1.0, where);
  v.sd = get_or<double>(t, "sd", 0.35, where);
  v.max_ratio = get_or<double>(t, "max_ratio", 100.0, where);
  return v;
}

}  // namespace

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kGenerate: return "generate";
    case Mode::kFit: return "fit";
    case Mode::kDiagram: return "diagram";
    case Mode::kReport: return "report";
  }
  return "?";
}

Mode mode_from_string(const std::string& name) {
  for (auto m : {Mode::kGenerate, Mode::kFit, Mode::kDiagram, Mode::kReport})
    if (name == to_string(m)) return m;
  throw ConfigError("unknown mode '" + name + "'");
}

const char* to_string(WeightInit init) {
  switch (init) {
    case WeightInit::kZeros: return "zeros";
    case WeightInit::kSpherePacking: return "sphere-packing";
    case WeightInit::kFile: return "file";
  }
  return "?";
}

WeightInit weight_init_from_string(const std::string& name) {
  for (auto w : {WeightInit::kZeros, WeightInit::kSpherePacking, WeightInit::kFile})
    if (name == to_string(w)) return w;
  throw ConfigError("unknown w_init policy '" + name + "'");
}

RunConfig parse_config(const json& doc, const fs::path& base_dir) {
  check_keys(doc,
             {"schema", "mode", "rng_seed", "threads", "domain", "seeds", "targets", "solver",
              "lloyd", "output", "report"},
             "config");
  const auto schema = get_or<std::string>(doc, "schema", "", "config");
  if (schema != kConfigSchema)
    throw ConfigError("config: schema must be '" + std::string(kConfigSchema) + "'");

  RunConfig c;
  c.mode = mode_from_string(get<std::string>(doc, "mode", "config"));
  c.rng_seed = get_or<std::uint64_t>(doc, "rng_seed", 0, "config");
  c.threads = get_or<int>(doc, "threads", 0, "config");

  if (c.mode != Mode::kReport || doc.contains("domain")) {
    const json& d = doc.contains("domain") ? doc.at("domain") : json::object();
    check_keys(d, {"lower", "upper", "periodic"}, "domain");
    c.upper = get<std::vector<double>>(d, "upper", "domain");
    c.dimension = static_cast<int>(c.upper.size());
    if (c.dimension != 2 && c.dimension != 3)
      throw ConfigError("domain: only 2 and 3 dimensions are supported");
    c.lower = get_or<std::vector<double>>(d, "lower", std::vector<double>(c.dimension, 0.0),
                                          "domain");
    if (c.lower.size() != c.upper.size())
      throw ConfigError("domain: lower and upper differ in dimension");
    c.periodic = get_or<bool>(d, "periodic", false, "domain");
  }

  if (doc.contains("seeds")) {
    const json& s = doc.at("seeds");
    if (s.is_object() && s.contains("file")) {
      check_keys(s, {"file"}, "seeds");
      c.seeds_file = resolve(base_dir, get<std::string>(s, "file", "seeds"));
    } else {
      c.spatial = parse_spatial(s, c, c.spatial_seed_given);
    }
  }
  if (doc.contains("targets")) {
    const json& t = doc.at("targets");
    if (t.is_object() && t.contains("file")) {
      check_keys(t, {"file"}, "targets");
      c.targets_file = resolve(base_dir, get<std::string>(t, "file", "targets"));
    } else {
      c.volumes = parse_volumes(t);
    }
  }

  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    const std::string where = "solver";
    check_keys(s,
               {"epsilon", "method", "max_iterations", "w_init", "weights_file", "memory",
                "diagonal_scaling"},
               where);
    c.solver.epsilon = get_or<double>(s, "epsilon", c.solver.epsilon, where);
    c.solver.method = solver_method_from_string(get_or<std::string>(s, "method", "quasi-newton", where));
    c.solver.max_iterations = get_or<int>(s, "max_iterations", 0, where);
    c.solver.memory = get_or<int>(s, "memory", c.solver.memory, where);
    c.solver.diagonal_scaling = get_or<bool>(s, "diagonal_scaling", false, where);
    c.w_init = weight_init_from_string(get_or<std::string>(s, "w_init", "zeros", where));
    if (s.contains("weights_file"))
      c.weights_file = resolve(base_dir, get<std::string>(s, "weights_file", where));
  }
  if (!(c.solver.epsilon > 0.0 && c.solver.epsilon < 1.0))
    throw ConfigError("solver.epsilon must lie in (0, 1)");
  if (c.solver.memory < 1) throw ConfigError("solver.memory must be positive");

  c.lloyd.epsilon = c.solver.epsilon;
  if (doc.contains("lloyd")) {
    const json& l = doc.at("lloyd");
    const std::string where = "lloyd";
    check_keys(l,
               {"K", "lambda", "displacement_stop", "sphericity_stop", "track_energy",
                "check_bounds"},
               where);
    c.lloyd.K = get_or<int>(l, "K", c.lloyd.K, where);
    c.lloyd.lambda = get_or<double>(l, "lambda", 1.0, where);
    if (l.contains("displacement_stop") && !l.at("displacement_stop").is_null())
      c.lloyd.displacement_stop = get<double>(l, "displacement_stop", where);
    if (l.contains("sphericity_stop") && !l.at("sphericity_stop").is_null())
      c.lloyd.sphericity_stop = get<double>(l, "sphericity_stop", where);
    c.lloyd.track_energy = get_or<bool>(l, "track_energy", false, where);
    if (!get_or<bool>(l, "check_bounds", true, where)) c.lloyd.bound_constant = 0.0;
  }
  if (c.lloyd.K < 1) throw ConfigError("lloyd.K must be at least 1");
  if (!(c.lloyd.lambda > 0.0 && c.lloyd.lambda <= 1.0))
    throw ConfigError("lloyd.lambda must lie in (0, 1]");
  c.lloyd.solver = c.solver;

  if (doc.contains("output")) {
    const json& o = doc.at("output");
    const std::string where = "output";
    check_keys(o, {"directory", "diagram", "report", "generators", "statistics", "vtk"}, where);
    c.output_dir = resolve(base_dir, get_or<std::string>(o, "directory", ".", where));
    c.diagram_name = get_or<std::string>(o, "diagram", c.diagram_name, where);
    c.report_name = get_or<std::string>(o, "report", c.report_name, where);
    c.generators_name = get_or<std::string>(o, "generators", c.generators_name, where);
    c.statistics_name = get_or<std::string>(o, "statistics", c.statistics_name, where);
    c.write_vtk = get_or<bool>(o, "vtk", false, where);
  } else {
    c.output_dir = base_dir;
  }

  if (doc.contains("report")) {
    const json& r = doc.at("report");
    check_keys(r, {"diagram", "reference"}, "report");
    if (r.contains("diagram")) c.report_diagram = resolve(base_dir, get<std::string>(r, "diagram", "report"));
    if (r.contains("reference"))
      c.reference_centroids = resolve(base_dir, get<std::string>(r, "reference", "report"));
  }

  // Consistency with the mode.
  switch (c.mode) {
    case Mode::kGenerate:
      if (!c.targets_file && !c.volumes) throw ConfigError("generate needs a targets block");
      if (c.w_init != WeightInit::kZeros)
        throw ConfigError("generate starts from zero weights; w_init must be 'zeros'");
      break;
    case Mode::kFit:
      if (!c.targets_file && !c.volumes && !c.seeds_file)
        throw ConfigError("fit needs a targets block or a seeds file with an m column");
      break;
    case Mode::kDiagram:
      if (!c.seeds_file && !doc.contains("seeds"))
        throw ConfigError("diagram needs a seeds block");
      break;
    case Mode::kReport:
      if (!c.report_diagram) throw ConfigError("report needs report.diagram");
      break;
  }
  if (c.w_init == WeightInit::kFile && !c.weights_file && !c.seeds_file)
    throw ConfigError("w_init 'file' needs solver.weights_file or a seeds file");
  return c;
}

RunConfig load_config(const fs::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return parse_config(doc, path.parent_path().empty() ? fs::path(".") : path.parent_path());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------------ CSV

PointTable parse_point_csv(const std::string& text, int dimension) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  PointTable t;
  t.dimension = dimension;
  int line_no = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  bool has_w = false, has_m = false;
  std::set<std::int64_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (header.empty()) {
      header = cells;
      std::vector<std::string> expected{"id", "x", "y"};
      if (dimension == 3) expected.push_back("z");
      std::size_t k = expected.size();
      if (header.size() < k || !std::equal(expected.begin(), expected.end(), header.begin()))
        throw ConfigError("csv header must start with " + std::string(dimension == 3 ? "id,x,y,z" : "id,x,y"));
      if (k < header.size() && header[k] == "w") has_w = true, ++k;
      if (k < header.size() && header[k] == "m") has_m = true, ++k;
      if (k != header.size()) throw ConfigError("csv header: unexpected column '" + header[k] + "'");
      continue;
    }
    if (cells.size() != header.size())
      throw ConfigError("csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields");
    auto number = [&](const std::string& s) {
      double v = 0.0;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
        throw ConfigError("csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
      return v;
    };
    std::int64_t id = 0;
    const auto r = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), id);
    if (r.ec != std::errc() || r.ptr != cells[0].data() + cells[0].size())
      throw ConfigError("csv line " + std::to_string(line_no) + ": bad id '" + cells[0] + "'");
    if (!seen.insert(id).second)
      throw IdMismatch("csv line " + std::to_string(line_no) + ": duplicate id " + cells[0]);
    t.ids.push_back(id);
    std::vector<double> p;
    for (int k = 0; k < dimension; ++k) p.push_back(number(cells[1 + k]));
    t.points.push_back(std::move(p));
    std::size_t k = 1 + dimension;
    if (has_w) t.weights.push_back(number(cells[k++]));
    if (has_m) t.masses.push_back(number(cells[k++]));
  }
  if (header.empty()) throw ConfigError("csv: missing header");
  return t;
}

std::string format_point_csv(const PointTable& t) {
  std::string out = t.dimension == 3 ? "id,x,y,z" : "id,x,y";
  if (!t.weights.empty()) out += ",w";
  if (!t.masses.empty()) out += ",m";
  out += '\n';
  for (std::size_t i = 0; i < t.size(); ++i) {
    out += std::to_string(t.ids[i]);
    for (double v : t.points[i]) out += ',' + format_double(v);
    if (!t.weights.empty()) out += ',' + format_double(t.weights[i]);
    if (!t.masses.empty()) out += ',' + format_double(t.masses[i]);
    out += '\n';
  }
  return out;
}

PointTable read_point_csv(const fs::path& path, int dimension) {
  try {
    return parse_point_csv(read_file(path), dimension);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// --------------------------------------------------------------- export

template <int D>
DiagramExport make_export(const LaguerreDiagram<D>& diagram, const TargetSpec* targets,
                          std::span<const std::int64_t> ids, std::span<const json> attributes) {
  const std::size_t n = diagram.size();
  if (!ids.empty() && ids.size() != n) throw IdMismatch("export: one id per cell required");
  if (!attributes.empty() && attributes.size() != n)
    throw IdMismatch("export: one attribute per cell required");
  if (targets && targets->size() != n) throw IdMismatch("export: one target per cell required");
  auto id_of = [&](std::size_t i) { return ids.empty() ? static_cast<std::int64_t>(i) : ids[i]; };

  DiagramExport e;
  e.dimension = D;
  e.periodic = diagram.domain.periodic;
  e.lower.assign(diagram.domain.lower.data(), diagram.domain.lower.data() + D);
  e.upper.assign(diagram.domain.upper.data(), diagram.domain.upper.data() + D);
  e.volume = diagram.domain.volume();

  // Vertices that coincide up to the geometric tolerance are shared.
  const double quantum = diagram.domain.tolerance();
  std::map<std::array<std::int64_t, 3>, int> index;
  auto vertex_id = [&](const Vec<D>& p) {
    std::array<std::int64_t, 3> key{0, 0, 0};
    for (int k = 0; k < D; ++k) key[k] = std::llround((p[k] - diagram.domain.lower[k]) / quantum);
    const auto [it, inserted] = index.emplace(key, static_cast<int>(e.vertices.size()));
    if (inserted) e.vertices.emplace_back(p.data(), p.data() + D);
    return it->second;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const Cell<D>& cell = diagram.cells[i];
    CellRecord rec;
    rec.id = id_of(i);
    const Vec<D>& x = diagram.generators[i].position;
    rec.seed.assign(x.data(), x.data() + D);
    rec.weight = diagram.generators[i].weight;
    rec.volume = cell.empty() ? 0.0 : cell.measures.volume;
    if (targets) {
      rec.target = (*targets)[i];
      rec.relative_error = (rec.volume - (*targets)[i]) / (*targets)[i];
    }
    if (!cell.empty()) {
      const Vec<D>& c = cell.measures.centroid;
      rec.centroid = std::vector<double>(c.data(), c.data() + D);
      rec.sphericity = sphericity(cell.polytope);
      const auto verts = cell.polytope.vertices();
      for (std::size_t f = 0; f < cell.polytope.num_faces(); ++f) {
        FaceRecord face;
        for (int v : cell.polytope.face_vertices(f)) face.vertices.push_back(vertex_id(verts[v]));
        const FaceTag& tag = cell.polytope.face_tag(f);
        if (tag.is_wall()) {
          face.wall = tag.wall_id();
        } else if (tag.is_seed()) {
          face.neighbor = id_of(static_cast<std::size_t>(tag.neighbor));
          for (int k = 0; k < 3; ++k) face.image[k] = tag.image[k];
        }
        face.area = cell.polytope.face_area(f);
        rec.faces.push_back(std::move(face));
      }
    }
    if (!attributes.empty()) rec.attribute = attributes[i];
    e.cells.push_back(std::move(rec));
  }
  return e;
}

json to_json(const DiagramExport& e) {
  json cells = json::array();
  for (const CellRecord& c : e.cells) {
    json faces = json::array();
    for (const FaceRecord& f : c.faces) {
      json face{{"vertices", f.vertices}, {"area", f.area}};
      if (f.neighbor) face["neighbor"] = *f.neighbor;
      if (f.wall) face["wall"] = *f.wall;
      if (f.image != std::array<int, 3>{0, 0, 0})
        face["image"] = std::vector<int>(f.image.begin(), f.image.begin() + e.dimension);
      faces.push_back(std::move(face));
    }
    json cell{{"id", c.id}, {"seed", c.seed}, {"weight", c.weight}, {"volume", c.volume},
              {"faces", std::move(faces)}};
    if (c.target) cell["target"] = *c.target;
    if (c.relative_error) cell["relative_error"] = *c.relative_error;
    if (c.centroid) cell["centroid"] = *c.centroid;
    if (c.sphericity) cell["sphericity"] = *c.sphericity;
    if (!c.attribute.is_null()) cell["attribute"] = c.attribute;
    cells.push_back(std::move(cell));
  }
  return json{{"format", kDiagramFormat},
              {"header",
               {{"n", e.cells.size()},
                {"d", e.dimension},
                {"periodic", e.periodic},
                {"lower", e.lower},
                {"upper", e.upper},
                {"volume", e.volume},
                {"version", e.version}}},
              {"vertices", e.vertices},
              {"cells", std::move(cells)}};
}

DiagramExport export_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kDiagramFormat)
      throw ConfigError("diagram export: unknown format");
    DiagramExport e;
    const json& h = doc.at("header");
    e.dimension = h.at("d").get<int>();
    e.periodic = h.at("periodic").get<bool>();
    e.lower = h.at("lower").get<std::vector<double>>();
    e.upper = h.at("upper").get<std::vector<double>>();
    e.volume = h.at("volume").get<double>();
    e.version = h.at("version").get<std::string>();
    e.vertices = doc.at("vertices").get<std::vector<std::vector<double>>>();
    for (const json& cj : doc.at("cells")) {
      CellRecord c;
      c.id = cj.at("id").get<std::int64_t>();
      c.seed = cj.at("seed").get<std::vector<double>>();
      c.weight = cj.at("weight").get<double>();
      c.volume = cj.at("volume").get<double>();
      if (cj.contains("target")) c.target = cj.at("target").get<double>();
      if (cj.contains("relative_error")) c.relative_error = cj.at("relative_error").get<double>();
      if (cj.contains("centroid")) c.centroid = cj.at("centroid").get<std::vector<double>>();
      if (cj.contains("sphericity")) c.sphericity = cj.at("sphericity").get<double>();
      if (cj.contains("attribute")) c.attribute = cj.at("attribute");
      for (const json& fj : cj.at("faces")) {
        FaceRecord f;
        f.vertices = fj.at("vertices").get<std::vector<int>>();
        f.area = fj.at("area").get<double>();
        if (fj.contains("neighbor")) f.neighbor = fj.at("neighbor").get<std::int64_t>();
        if (fj.contains("wall")) f.wall = fj.at("wall").get<int>();
        if (fj.contains("image")) {
          const auto img = fj.at("image").get<std::vector<int>>();
          for (std::size_t k = 0; k < img.size() && k < 3; ++k) f.image[k] = img[k];
        }
        for (int v : f.vertices)
          if (v < 0 || v >= static_cast<int>(e.vertices.size()))
            throw ConfigError("diagram export: vertex index out of range");
        c.faces.push_back(std::move(f));
      }
      e.cells.push_back(std::move(c));
    }
    if (h.at("n").get<std::size_t>() != e.cells.size())
      throw ConfigError("diagram export: header n does not match the cell count");
    return e;
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("diagram export: ") + ex.what());
  }
}

std::string serialise(const DiagramExport& e) { return to_json(e).dump() + '\n'; }

DiagramExport parse_export(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& ex) {
    throw ConfigError(std::string("diagram export: ") + ex.what());
  }
  return export_from_json(doc);
}

std::string to_vtk(const DiagramExport& e) {
  std::vector<std::vector<int>> polygons;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < e.cells.size(); ++i) {
    const CellRecord& c = e.cells[i];
    if (e.dimension == 2) {
      if (c.faces.empty()) continue;
      std::vector<int> ring;
      for (const FaceRecord& f : c.faces) ring.push_back(f.vertices.front());
      polygons.push_back(std::move(ring));
      owner.push_back(i);
    } else {
      for (const FaceRecord& f : c.faces) {
        polygons.push_back(f.vertices);
        owner.push_back(i);
      }
    }
  }
  std::size_t size = 0;
  for (const auto& p : polygons) size += p.size() + 1;

  std::string out = "# vtk DataFile Version 3.0\nlaguerre diagram\nASCII\nDATASET POLYDATA\n";
  out += "POINTS " + std::to_string(e.vertices.size()) + " double\n";
  for (const auto& v : e.vertices) {
    out += format_double(v[0]) + ' ' + format_double(v[1]) + ' ' +
           (e.dimension == 3 ? format_double(v[2]) : std::string("0")) + '\n';
  }
  out += "POLYGONS " + std::to_string(polygons.size()) + ' ' + std::to_string(size) + '\n';
  for (const auto& p : polygons) {
    out += std::to_string(p.size());
    for (int v : p) out += ' ' + std::to_string(v);
    out += '\n';
  }
  out += "CELL_DATA " + std::to_string(polygons.size()) + '\n';
  out += "SCALARS cell_id long 1\nLOOKUP_TABLE default\n";
  for (std::size_t o : owner) out += std::to_string(e.cells[o].id) + '\n';
  out += "SCALARS volume double 1\nLOOKUP_TABLE default\n";
  for (std::size_t o : owner) out += format_double(e.cells[o].volume) + '\n';
  out += "SCALARS relative_error double 1\nLOOKUP_TABLE default\n";
  for (std::size_t o : owner) out += format_double(e.cells[o].relative_error.value_or(0.0)) + '\n';
  return out;
}

// ----------------------------------------------------------- statistics

double Distribution::ccdf_at(double x) const {
  if (values.empty()) return 0.0;
  const auto above = values.end() - std::upper_bound(values.begin(), values.end(), x);
  return static_cast<double>(above) / static_cast<double>(values.size());
}

Distribution make_distribution(std::vector<double> values) {
  Distribution d;
  std::sort(values.begin(), values.end());
  d.values = std::move(values);
  const std::size_t n = d.values.size();
  if (n == 0) return d;
  double sum = 0.0;
  for (double v : d.values) sum += v;
  d.mean = sum / static_cast<double>(n);
  auto quantile = [&](double p) {
    const double h = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    return d.values[lo] + (h - static_cast<double>(lo)) * (d.values[hi] - d.values[lo]);
  };
  d.median = quantile(0.5);
  d.p90 = quantile(0.9);
  d.p99 = quantile(0.99);
  d.max = d.values.back();
  for (double v : d.values) d.ccdf.emplace_back(v, d.ccdf_at(v));
  return d;
}

ErrorStatistics report_errors(const DiagramExport& e, const PointTable* targets,
                              const PointTable* reference) {
  std::unordered_map<std::int64_t, std::size_t> row;
  for (std::size_t i = 0; i < e.cells.size(); ++i) {
    if (!row.emplace(e.cells[i].id, i).second)
      throw IdMismatch("report: duplicate cell id " + std::to_string(e.cells[i].id));
  }
  auto align = [&](const PointTable& t, const char* what) {
    if (t.size() != e.cells.size())
      throw IdMismatch(std::string("report: ") + what + " has " + std::to_string(t.size()) +
                       " rows for " + std::to_string(e.cells.size()) + " cells");
    std::vector<std::size_t> order(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      const auto it = row.find(t.ids[k]);
      if (it == row.end())
        throw IdMismatch(std::string("report: ") + what + " id " + std::to_string(t.ids[k]) +
                         " is not in the diagram");
      order[it->second] = k;
    }
    return order;
  };

  std::vector<double> m(e.cells.size());
  if (targets) {
    if (targets->masses.empty()) throw ConfigError("report: targets file lacks an m column");
    const auto order = align(*targets, "targets");
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = targets->masses[order[i]];
  } else {
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!e.cells[i].target) throw ConfigError("report: the diagram carries no target volumes");
      m[i] = *e.cells[i].target;
    }
  }

  ErrorStatistics s;
  std::vector<double> percent(m.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    percent[i] = 100.0 * std::abs(e.cells[i].volume - m[i]) / m[i];
  s.volume_error_percent = make_distribution(std::move(percent));

  if (reference) {
    const auto order = align(*reference, "reference");
    std::vector<double> rel(m.size());
    std::size_t below = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const CellRecord& c = e.cells[i];
      if (!c.centroid) {
        rel[i] = std::numeric_limits<double>::infinity();
        continue;
      }
      const auto& ref = reference->points[order[i]];
      double dist2 = 0.0;
      for (int k = 0; k < e.dimension; ++k) {
        double diff = (*c.centroid)[k] - ref[k];
        if (e.periodic) {
          const double len = e.upper[k] - e.lower[k];
          diff -= len * std::round(diff / len);
        }
        dist2 += diff * diff;
      }
      const double r = e.dimension == 3 ? equivalent_radius<3>(m[i]) : equivalent_radius<2>(m[i]);
      rel[i] = std::sqrt(dist2) / r;
      if (rel[i] < 1.0) ++below;
    }
    s.fraction_centroid_below_one = static_cast<double>(below) / static_cast<double>(m.size());
    s.centroid_relative_error = make_distribution(std::move(rel));
  }
  return s;
}

namespace {

json distribution_json(const Distribution& d) {
  json ccdf = json::array();
  for (const auto& [x, f] : d.ccdf) ccdf.push_back({x, f});
  return json{{"count", d.values.size()}, {"mean", d.mean}, {"median", d.median},
              {"p90", d.p90},             {"p99", d.p99},   {"max", d.max},
              {"ccdf", std::move(ccdf)}};
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

json to_json(const ErrorStatistics& s) {
  json out{{"volume_error_percent", distribution_json(s.volume_error_percent)}};
  if (s.centroid_relative_error) {
    out["centroid_relative_error"] = distribution_json(*s.centroid_relative_error);
    out["fraction_centroid_below_one"] = *s.fraction_centroid_below_one;
  }
  return out;
}

json to_json(const SolveReport& r) {
  return json{{"method", r.method},
              {"converged", r.converged},
              {"outer_iterations", r.outer_iterations},
              {"function_evaluations", r.function_evaluations},
              {"grad_inf_norm", r.grad_inf_norm},
              {"threshold", r.threshold},
              {"max_relative_error", r.max_relative_error()},
              {"grad_history", r.grad_history},
              {"relative_errors", r.relative_errors},
              {"wall_seconds", r.wall_seconds}};
}

json to_json(const LloydTrace& t) {
  json records = json::array();
  for (const LloydRecord& r : t.records) {
    records.push_back({{"iteration", r.iteration},
                       {"energy", finite_or_null(r.energy)},
                       {"max_displacement", r.max_displacement},
                       {"evaluations", r.evaluations},
                       {"solver_iterations", r.solver_iterations},
                       {"max_relative_error", r.max_relative_error},
                       {"mean_sphericity", r.mean_sphericity},
                       {"boundary_ratio", finite_or_null(r.boundary_ratio)},
                       {"separation_ratio", finite_or_null(r.separation_ratio)},
                       {"wall_seconds", r.wall_seconds},
                       {"volumes", r.volumes}});
  }
  return json{{"initial_energy", finite_or_null(t.initial_energy)},
              {"stop_reason", t.stop_reason},
              {"records", std::move(records)}};
}

// -------------------------------------------------------------------- IO

void write_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int exit_code_for(const Error& error) {
  static const std::set<std::string> input{"ConfigError",     "InvalidTargets", "InfeasibleSpec",
                                           "IdMismatch",      "DegenerateDomain",
                                           "CoincidentSeeds"};
  if (error.kind() == "IoError") return 4;
  if (input.count(error.kind())) return 2;
  return 3;
}

// -------------------------------------------------------------- pipeline

namespace {

template <int D>
struct Inputs {
  Domain<D> domain;
  std::vector<std::int64_t> ids;
  std::vector<Vec<D>> positions;
  std::optional<TargetSpec> targets;
  std::vector<int> classes;
  /// Weights from the seeds file, if it had a w column.
  std::optional<Vector> file_weights;
};

template <int D>
Vec<D> to_vec(const std::vector<double>& v) {
  Vec<D> x;
  for (int k = 0; k < D; ++k) x[k] = v[k];
  return x;
}

void require_same_ids(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b,
                      const std::string& what) {
  if (a != b) throw IdMismatch(what + ": ids differ from the targets (same ids in the same order required)");
}

template <int D>
Inputs<D> load_inputs(const RunConfig& c) {
  Inputs<D> in;
  in.domain.lower = to_vec<D>(c.lower);
  in.domain.upper = to_vec<D>(c.upper);
  in.domain.periodic = c.periodic;
  in.domain.validate();

  std::optional<PointTable> seeds_table;
  if (c.seeds_file) seeds_table = read_point_csv(*c.seeds_file, D);

  if (c.targets_file) {
    const PointTable t = read_point_csv(*c.targets_file, D);
    if (t.masses.empty()) throw ConfigError(c.targets_file->string() + ": no m column");
    in.targets = TargetSpec::normalised(t.masses, in.domain.volume());
    in.ids = t.ids;
  } else if (c.volumes) {
    Rng rng(c.rng_seed);
    TargetDraw draw = make_targets(in.domain.volume(), D, *c.volumes, rng);
    in.targets = std::move(draw.targets);
    in.classes = std::move(draw.classes);
    for (std::size_t i = 0; i < in.targets->size(); ++i) in.ids.push_back(static_cast<std::int64_t>(i));
  } else if (seeds_table && !seeds_table->masses.empty()) {
    in.targets = TargetSpec::normalised(seeds_table->masses, in.domain.volume());
  }

  if (seeds_table) {
    if (in.ids.empty()) in.ids = seeds_table->ids;
    require_same_ids(in.ids, seeds_table->ids, c.seeds_file->string());
    for (const auto& p : seeds_table->points) in.positions.push_back(to_vec<D>(p));
    if (!seeds_table->weights.empty())
      in.file_weights = Eigen::Map<const Vector>(seeds_table->weights.data(),
                                                 static_cast<Eigen::Index>(seeds_table->weights.size()));
  } else {
    SpatialSpec spec = c.spatial;
    // Positions draw from their own stream unless a seed is given explicitly.
    if (!c.spatial_seed_given) spec.rng_seed = c.rng_seed ^ 0x9e3779b97f4a7c15ULL;
    std::size_t n = in.targets ? in.targets->size() : spec.positions.size();
    if (n == 0) throw ConfigError("seeds: cannot tell how many seeds to place");
    std::vector<double> sizes;
    if (in.targets) sizes = in.targets->targets;
    in.positions = sample_positions<D>(in.domain, n, spec, in.classes, sizes);
    if (in.ids.empty())
      for (std::size_t i = 0; i < n; ++i) in.ids.push_back(static_cast<std::int64_t>(i));
  }
  if (in.targets && in.targets->size() != in.positions.size())
    throw IdMismatch("number of seeds and targets differ");
  return in;
}

template <int D>
Vector initial_weights(const RunConfig& c, const Inputs<D>& in) {
  const auto n = static_cast<Eigen::Index>(in.positions.size());
  switch (c.w_init) {
    case WeightInit::kZeros: return Vector::Zero(n);
    case WeightInit::kSpherePacking:
      if (!in.targets) throw ConfigError("w_init 'sphere-packing' needs target volumes");
      return sphere_packing_init(*in.targets, D);
    case WeightInit::kFile: {
      if (c.weights_file) {
        const PointTable t = read_point_csv(*c.weights_file, D);
        if (t.weights.empty()) throw ConfigError(c.weights_file->string() + ": no w column");
        require_same_ids(in.ids, t.ids, c.weights_file->string());
        return Eigen::Map<const Vector>(t.weights.data(), n);
      }
      if (!in.file_weights) throw ConfigError("w_init 'file': the seeds file has no w column");
      return *in.file_weights;
    }
  }
  return Vector::Zero(n);
}

template <int D>
PointTable generators_table(const Inputs<D>& in, std::span<const Vec<D>> positions,
                            const Vector& weights) {
  PointTable t;
  t.dimension = D;
  t.ids = in.ids;
  for (const Vec<D>& x : positions) t.points.emplace_back(x.data(), x.data() + D);
  t.weights.assign(weights.data(), weights.data() + weights.size());
  if (in.targets) t.masses = in.targets->targets;
  return t;
}

template <int D>
void write_geometry(const RunConfig& c, const Inputs<D>& in, const LaguerreDiagram<D>& diagram) {
  const DiagramExport e = make_export(diagram, in.targets ? &*in.targets : nullptr,
                                      std::span<const std::int64_t>(in.ids));
  write_atomic(c.output_dir / c.diagram_name, serialise(e));
  if (c.write_vtk) {
    fs::path vtk = c.output_dir / c.diagram_name;
    vtk.replace_extension(".vtk");
    write_atomic(vtk, to_vtk(e));
  }
}

template <int D>
void run_pipeline(const RunConfig& c) {
  const Inputs<D> in = load_inputs<D>(c);
  json report{{"mode", to_string(c.mode)}, {"n", in.positions.size()}, {"d", D},
              {"rng_seed", c.rng_seed}, {"version", kVersion}};
  switch (c.mode) {
    case Mode::kGenerate: {
      const LloydResult<D> r = algorithm2<D>(in.domain, *in.targets, in.positions, c.lloyd);
      report["solve"] = to_json(r.last_report);
      report["lloyd"] = to_json(r.trace);
      write_geometry(c, in, r.state.diagram);
      write_atomic(c.output_dir / c.generators_name,
                   format_point_csv(generators_table<D>(in, r.positions, r.state.weights)));
      break;
    }
    case Mode::kFit: {
      if (!in.targets) throw ConfigError("fit needs target volumes");
      const Vector w0 = initial_weights(c, in);
      const WeightSolution<D> sol = solve_weights<D>(in.domain, in.positions, *in.targets, w0, c.solver);
      report["solve"] = to_json(sol.report);
      write_geometry(c, in, sol.state.diagram);
      write_atomic(c.output_dir / c.generators_name,
                   format_point_csv(generators_table<D>(in, in.positions, sol.state.weights)));
      break;
    }
    case Mode::kDiagram: {
      Vector w = in.file_weights && c.w_init == WeightInit::kZeros ? *in.file_weights
                                                                   : initial_weights(c, in);
      const std::vector<double> weights(w.data(), w.data() + w.size());
      const auto diagram = build_diagram<D>(in.domain, make_seeds<D>(in.positions, weights));
      write_geometry(c, in, diagram);
      return;
    }
    case Mode::kReport: break;
  }
  write_atomic(c.output_dir / c.report_name, report.dump(1) + '\n');
}

void run_report(const RunConfig& c) {
  const DiagramExport e = parse_export(read_file(*c.report_diagram));
  std::optional<PointTable> targets, reference;
  if (c.targets_file) targets = read_point_csv(*c.targets_file, e.dimension);
  if (c.reference_centroids) reference = read_point_csv(*c.reference_centroids, e.dimension);
  const ErrorStatistics s =
      report_errors(e, targets ? &*targets : nullptr, reference ? &*reference : nullptr);
  write_atomic(c.output_dir / c.statistics_name, to_json(s).dump(1) + '\n');
}

void write_error(std::ostream& err, const std::string& kind, const std::string& message, int code) {
  err << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << std::endl;
}

}  // namespace

int run(const RunConfig& config, std::ostream& err) {
  try {
    if (config.threads > 0) omp_set_num_threads(config.threads);
    if (config.mode == Mode::kReport) {
      run_report(config);
    } else if (config.dimension == 2) {
      run_pipeline<2>(config);
    } else {
      run_pipeline<3>(config);
    }
    return 0;
  } catch (const Error& e) {
    const int code = exit_code_for(e);
    write_error(err, e.kind(), e.what(), code);
    return code;
  } catch (const fs::filesystem_error& e) {
    write_error(err, "IoError", e.what(), 4);
    return 4;
  } catch (const std::exception& e) {
    write_error(err, "InternalError", e.what(), 3);
    return 3;
  }
}

template DiagramExport make_export<2>(const LaguerreDiagram<2>&, const TargetSpec*,
                                      std::span<const std::int64_t>, std::span<const json>);
template DiagramExport make_export<3>(const LaguerreDiagram<3>&, const TargetSpec*,
                                      std::span<const std::int64_t>, std::span<const json>);

}  // namespace laguerre::cli
