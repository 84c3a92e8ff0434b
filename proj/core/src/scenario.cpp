#include "ihmpc/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ihmpc {

using json = nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string join(const std::vector<std::string>& errors) {
  std::string out;
  for (const std::string& e : errors) {
    if (!out.empty()) out += "; ";
    out += e;
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// JSON encoding

json encode_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

json encode_vector(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(encode_number(v[i]));
  return a;
}

json encode_matrix(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(encode_number(m(i, j)));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

json encode_rectangle(const Rectangle& r) {
  return json{{"lo", encode_vector(r.lo())}, {"hi", encode_vector(r.hi())}};
}

json encode_complex(std::complex<double> c) {
  if (c.imag() == 0.0) return c.real();
  return json::array({c.real(), c.imag()});
}

// ---------------------------------------------------------------------------
// JSON decoding that records every problem instead of stopping at the first.

class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& where, const std::string& what) { errors.push_back(where + ": " + what); }

  std::optional<double> number(const json& j, const std::string& where) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
      const std::string s = j.get<std::string>();
      if (s == "inf" || s == "+inf" || s == "infinity") return kInf;
      if (s == "-inf" || s == "-infinity") return -kInf;
    }
    fail(where, "expected a number");
    return std::nullopt;
  }

  std::optional<double> finite(const json& j, const std::string& where) {
    auto v = number(j, where);
    if (v && !std::isfinite(*v)) {
      fail(where, "must be finite");
      return std::nullopt;
    }
    return v;
  }

  std::optional<int> integer(const json& j, const std::string& where) {
    if (j.is_number_integer()) return j.get<int>();
    if (j.is_number_float()) {
      const double d = j.get<double>();
      if (std::floor(d) == d && std::abs(d) < 1e9) return static_cast<int>(d);
    }
    fail(where, "expected an integer");
    return std::nullopt;
  }

  std::optional<Vector> vector(const json& j, const std::string& where, bool allow_inf = false) {
    if (j.is_number()) return Vector::Constant(1, j.get<double>());
    if (!j.is_array()) {
      fail(where, "expected an array of numbers");
      return std::nullopt;
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    bool ok = true;
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string w = where + "[" + std::to_string(i) + "]";
      auto x = allow_inf ? number(j[i], w) : finite(j[i], w);
      if (x) {
        v[static_cast<Eigen::Index>(i)] = *x;
      } else {
        ok = false;
      }
    }
    if (!ok) return std::nullopt;
    return v;
  }

  std::optional<Matrix> matrix(const json& j, const std::string& where) {
    if (j.is_number()) {
      auto x = finite(j, where);
      if (!x) return std::nullopt;
      return Matrix::Constant(1, 1, *x);
    }
    if (j.is_object() && j.contains("diag")) {
      auto d = vector(j.at("diag"), where + ".diag");
      if (!d) return std::nullopt;
      return Matrix(d->asDiagonal());
    }
    if (j.is_object()) {
      auto r = j.contains("rows") ? integer(j.at("rows"), where + ".rows") : std::nullopt;
      auto c = j.contains("cols") ? integer(j.at("cols"), where + ".cols") : std::nullopt;
      if (!j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
        fail(where, "matrix object needs rows, cols and data");
        return std::nullopt;
      }
      if (!r || !c) return std::nullopt;
      if (*r < 0 || *c < 0) {
        fail(where, "negative matrix dimension");
        return std::nullopt;
      }
      auto data = vector(j.at("data"), where + ".data");
      if (!data) return std::nullopt;
      if (data->size() != static_cast<Eigen::Index>(*r) * *c) {
        fail(where, "data has " + std::to_string(data->size()) + " entries, expected " +
                        std::to_string(*r * *c));
        return std::nullopt;
      }
      Matrix m(*r, *c);
      for (int i = 0; i < *r; ++i) {
        for (int k = 0; k < *c; ++k) m(i, k) = (*data)[i * *c + k];
      }
      return m;
    }
    if (j.is_array() && !j.empty() && j[0].is_array()) {
      const std::size_t cols = j[0].size();
      Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
      for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string w = where + "[" + std::to_string(i) + "]";
        if (!j[i].is_array() || j[i].size() != cols) {
          fail(w, "rows must be arrays of equal length");
          return std::nullopt;
        }
        auto row = vector(j[i], w);
        if (!row) return std::nullopt;
        m.row(static_cast<Eigen::Index>(i)) = row->transpose();
      }
      return m;
    }
    fail(where, "expected a matrix (number, nested rows, {diag} or {rows, cols, data})");
    return std::nullopt;
  }

  std::optional<std::complex<double>> complex(const json& j, const std::string& where) {
    if (j.is_number()) return std::complex<double>(j.get<double>(), 0.0);
    if (j.is_array() && j.size() == 2) {
      auto re = finite(j[0], where + "[0]");
      auto im = finite(j[1], where + "[1]");
      if (re && im) return std::complex<double>(*re, *im);
      return std::nullopt;
    }
    fail(where, "expected a number or [re, im]");
    return std::nullopt;
  }

  std::optional<Rectangle> rectangle(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("lo") || !j.contains("hi")) {
      fail(where, "expected {lo, hi}");
      return std::nullopt;
    }
    auto lo = vector(j.at("lo"), where + ".lo", true);
    auto hi = vector(j.at("hi"), where + ".hi", true);
    if (!lo || !hi) return std::nullopt;
    try {
      return Rectangle(*lo, *hi);
    } catch (const Error& e) {
      fail(where, e.what());
      return std::nullopt;
    }
  }

  void unknown_keys(const json& j, const std::string& where, const std::set<std::string>& known) {
    if (!j.is_object()) return;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!known.count(it.key())) fail(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
    }
  }
};

void require_dims(Reader& rd, const Matrix& m, Eigen::Index r, Eigen::Index c, const std::string& name) {
  if (m.rows() != r || m.cols() != c) {
    rd.fail(name, "expected " + std::to_string(r) + "x" + std::to_string(c) + ", got " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

void require_weight(Reader& rd, const Matrix& m, Eigen::Index n, const std::string& name) {
  if (m.rows() != n || m.cols() != n) {
    require_dims(rd, m, n, n, "weights." + name);
    return;
  }
  try {
    require_symmetric_pd(m, name.c_str());
  } catch (const Error& e) {
    rd.fail("weights." + name, e.what());
  }
}

}  // namespace

ScenarioError::ScenarioError(std::vector<std::string> errors)
    : Error(ErrorCode::kInvalidArgument, "invalid scenario: " + join(errors)), errors_(std::move(errors)) {}

OpomModel Scenario::model() const {
  if (model_from_modes) return build_from_modes(D0, modes);
  return OpomModel(D0, F, Dd, Psi);
}

Scenario parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError({std::string("parse error: ") + e.what()});
  }
  if (!doc.is_object()) throw ScenarioError({"document must be an object"});

  Reader rd;
  Scenario sc;
  rd.unknown_keys(doc, "", {"controller", "model", "horizon", "weights", "U", "dU", "Y", "reference",
                            "target", "initial_state", "steps", "tolerances", "certificate"});

  if (!doc.contains("controller")) {
    rd.fail("controller", "missing");
  } else if (doc["controller"] == "setpoint") {
    sc.controller = ControllerKind::kSetpoint;
  } else if (doc["controller"] == "zone") {
    sc.controller = ControllerKind::kZone;
  } else {
    rd.fail("controller", "must be \"setpoint\" or \"zone\"");
  }
  const bool zone = sc.controller == ControllerKind::kZone;

  // Model
  bool model_ok = false;
  if (!doc.contains("model") || !doc["model"].is_object()) {
    rd.fail("model", "missing or not an object");
  } else {
    const json& jm = doc["model"];
    rd.unknown_keys(jm, "model", {"D0", "F", "Dd", "Psi", "modes"});
    auto D0 = jm.contains("D0") ? rd.matrix(jm["D0"], "model.D0") : std::nullopt;
    if (!jm.contains("D0")) rd.fail("model.D0", "missing");
    if (D0) {
      sc.D0 = *D0;
      model_ok = true;
      const auto ny = sc.D0.rows();
      const auto nu = sc.D0.cols();
      if (jm.contains("modes")) {
        sc.model_from_modes = true;
        if (jm.contains("F") || jm.contains("Dd") || jm.contains("Psi")) {
          rd.fail("model", "give either modes or F/Dd/Psi, not both");
        }
        if (!jm["modes"].is_array()) {
          rd.fail("model.modes", "expected an array");
          model_ok = false;
        } else {
          for (std::size_t i = 0; i < jm["modes"].size(); ++i) {
            const json& jmode = jm["modes"][i];
            const std::string w = "model.modes[" + std::to_string(i) + "]";
            rd.unknown_keys(jmode, w, {"pole", "residue", "output", "input"});
            Mode mode;
            if (!jmode.is_object() || !jmode.contains("pole")) {
              rd.fail(w, "needs a pole");
              model_ok = false;
              continue;
            }
            auto pole = rd.complex(jmode["pole"], w + ".pole");
            auto res = jmode.contains("residue") ? rd.complex(jmode["residue"], w + ".residue")
                                                 : std::optional<std::complex<double>>(1.0);
            auto out = jmode.contains("output") ? rd.integer(jmode["output"], w + ".output")
                                                : std::optional<int>(0);
            auto in = jmode.contains("input") ? rd.integer(jmode["input"], w + ".input")
                                              : std::optional<int>(0);
            if (!pole || !res || !out || !in) {
              model_ok = false;
              continue;
            }
            mode.pole = *pole;
            mode.residue = *res;
            mode.output_index = *out;
            mode.input_index = *in;
            sc.modes.push_back(mode);
          }
        }
      } else if (jm.contains("F")) {
        auto F = rd.matrix(jm["F"], "model.F");
        auto Dd = jm.contains("Dd") ? rd.matrix(jm["Dd"], "model.Dd") : std::nullopt;
        auto Psi = jm.contains("Psi") ? rd.matrix(jm["Psi"], "model.Psi") : std::nullopt;
        if (!jm.contains("Dd")) rd.fail("model.Dd", "missing (required with F)");
        if (!jm.contains("Psi")) rd.fail("model.Psi", "missing (required with F)");
        if (F && Dd && Psi) {
          sc.F = *F;
          sc.Dd = *Dd;
          sc.Psi = *Psi;
        } else {
          model_ok = false;
        }
      } else {
        if (jm.contains("Dd") || jm.contains("Psi")) rd.fail("model", "Dd/Psi given without F");
        sc.F = Matrix(0, 0);
        sc.Dd = Matrix(0, nu);
        sc.Psi = Matrix(ny, 0);
      }
    }
  }

  if (doc.contains("horizon")) {
    if (auto m = rd.integer(doc["horizon"], "horizon")) sc.horizon = *m;
  } else {
    rd.fail("horizon", "missing");
  }
  if (sc.horizon < 1) rd.fail("horizon", "must be at least 1");

  if (doc.contains("steps")) {
    if (auto s = rd.integer(doc["steps"], "steps")) sc.steps = *s;
    if (sc.steps < 1) rd.fail("steps", "must be at least 1");
  }

  // Weights
  const std::string slack_name = zone ? "Su" : "S";
  if (!doc.contains("weights") || !doc["weights"].is_object()) {
    rd.fail("weights", "missing or not an object");
  } else {
    const json& jw = doc["weights"];
    if (zone) {
      rd.unknown_keys(jw, "weights", {"Qy", "Qu", "R", "Sy", "Su"});
    } else {
      rd.unknown_keys(jw, "weights", {"Q", "R", "S"});
    }
    auto get = [&](const std::string& key, Matrix& dst) {
      if (!jw.contains(key)) {
        rd.fail("weights." + key, "missing");
        return;
      }
      if (auto m = rd.matrix(jw[key], "weights." + key)) dst = *m;
    };
    if (zone) {
      get("Qy", sc.Qy);
      get("Qu", sc.Qu);
      get("Sy", sc.Sy);
    } else {
      get("Q", sc.Q);
    }
    get("R", sc.R);
    if (!jw.contains(slack_name) || jw[slack_name] == "auto") {
      sc.slack_weight.reset();
    } else if (auto m = rd.matrix(jw[slack_name], "weights." + slack_name)) {
      sc.slack_weight = *m;
    }
  }

  bool have_U = false;
  bool have_dU = false;
  if (!doc.contains("U")) {
    rd.fail("U", "missing");
  } else if (auto r = rd.rectangle(doc["U"], "U")) {
    sc.U = *r;
    have_U = true;
  }
  if (!doc.contains("dU")) {
    rd.fail("dU", "missing");
  } else if (auto r = rd.rectangle(doc["dU"], "dU")) {
    sc.dU = *r;
    have_dU = true;
  }
  if (doc.contains("Y")) {
    if (auto r = rd.rectangle(doc["Y"], "Y")) sc.Y = *r;
  } else if (zone) {
    rd.fail("Y", "missing (required for zone control)");
  }

  if (zone) {
    if (!doc.contains("target")) {
      rd.fail("target", "missing (required for zone control)");
    } else if (auto v = rd.vector(doc["target"], "target")) {
      sc.target = *v;
    }
    if (doc.contains("reference")) rd.fail("reference", "only valid for set-point control");
  } else {
    if (!doc.contains("reference")) {
      rd.fail("reference", "missing (required for set-point control)");
    } else if (auto v = rd.vector(doc["reference"], "reference")) {
      sc.reference = *v;
    }
    if (doc.contains("target")) rd.fail("target", "only valid for zone control");
  }

  if (doc.contains("initial_state")) {
    const json& js = doc["initial_state"];
    rd.unknown_keys(js, "initial_state", {"xs", "xd", "u"});
    PlantState st;
    bool ok = js.is_object();
    if (!ok) rd.fail("initial_state", "expected an object");
    for (const char* key : {"xs", "xd", "u"}) {
      if (!ok) break;
      if (!js.contains(key)) {
        rd.fail(std::string("initial_state.") + key, "missing");
        ok = false;
        break;
      }
      auto v = js[key].is_array() && js[key].empty()
                   ? std::optional<Vector>(Vector(0))
                   : rd.vector(js[key], std::string("initial_state.") + key);
      if (!v) {
        ok = false;
        break;
      }
      (std::string(key) == "xs" ? st.xs : std::string(key) == "xd" ? st.xd : st.u) = *v;
    }
    if (ok) sc.initial_state = st;
  }

  if (doc.contains("tolerances")) {
    const json& jt = doc["tolerances"];
    rd.unknown_keys(jt, "tolerances",
                    {"monotone", "identity", "bound", "converge", "limit", "target", "consistency"});
    auto tol = [&](const char* key, double& dst) {
      if (!jt.contains(key)) return;
      if (auto v = rd.finite(jt[key], std::string("tolerances.") + key)) {
        if (*v < 0.0) {
          rd.fail(std::string("tolerances.") + key, "must be nonnegative");
        } else {
          dst = *v;
        }
      }
    };
    tol("monotone", sc.tolerances.monotone);
    tol("identity", sc.tolerances.identity);
    tol("bound", sc.tolerances.bound);
    tol("converge", sc.tolerances.converge);
    tol("limit", sc.tolerances.limit);
    tol("target", sc.tolerances.target);
    tol("consistency", sc.tolerances.consistency);
  }

  if (doc.contains("certificate")) {
    const json& jc = doc["certificate"];
    rd.unknown_keys(jc, "certificate", {"margin", "su_shift", "beta", "phi", "phi_samples", "phi_seed",
                                        "phi_safety", "rank_tol"});
    CertificateOptions& co = sc.certificate;
    if (jc.contains("margin")) {
      if (auto v = rd.finite(jc["margin"], "certificate.margin")) co.margin = *v;
      if (!(co.margin > 0.0)) rd.fail("certificate.margin", "must be strictly positive");
    }
    if (jc.contains("su_shift")) {
      if (auto v = rd.finite(jc["su_shift"], "certificate.su_shift")) co.su_shift = *v;
      if (!(co.su_shift > 1.0)) rd.fail("certificate.su_shift", "must exceed 1");
    }
    if (jc.contains("beta")) {
      if (auto v = rd.finite(jc["beta"], "certificate.beta")) {
        if (*v > 0.0) {
          co.beta_override = *v;
        } else {
          rd.fail("certificate.beta", "must be positive");
        }
      }
    }
    if (jc.contains("phi")) {
      if (auto v = rd.finite(jc["phi"], "certificate.phi")) {
        if (*v > 0.0 && *v <= 1.0) {
          co.phi_override = *v;
        } else {
          rd.fail("certificate.phi", "must lie in (0, 1]");
        }
      }
    }
    if (jc.contains("phi_samples")) {
      if (auto v = rd.integer(jc["phi_samples"], "certificate.phi_samples")) co.phi.n_samples = *v;
      if (co.phi.n_samples < 1) rd.fail("certificate.phi_samples", "must be at least 1");
    }
    if (jc.contains("phi_seed")) {
      if (jc["phi_seed"].is_number_unsigned()) {
        co.phi.seed = jc["phi_seed"].get<std::uint64_t>();
      } else {
        rd.fail("certificate.phi_seed", "expected a nonnegative integer");
      }
    }
    if (jc.contains("phi_safety")) {
      if (auto v = rd.finite(jc["phi_safety"], "certificate.phi_safety")) co.phi.safety = *v;
      if (!(co.phi.safety > 0.0 && co.phi.safety <= 1.0)) {
        rd.fail("certificate.phi_safety", "must lie in (0, 1]");
      }
    }
    if (jc.contains("rank_tol")) {
      if (auto v = rd.finite(jc["rank_tol"], "certificate.rank_tol")) co.rank_tol = *v;
      if (!(co.rank_tol >= 0.0 && co.rank_tol < 1.0)) rd.fail("certificate.rank_tol", "must lie in [0, 1)");
    }
  }

  // Semantic checks that need the dimensions.
  if (model_ok) {
    const auto ny = sc.D0.rows();
    const auto nu = sc.D0.cols();
    try {
      (void)sc.model();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kUnstableModel) {
        rd.fail("model", std::string(e.what()) + " (the dynamic part must be asymptotically stable)");
      } else {
        rd.fail("model", e.what());
      }
    }
    if (zone) {
      require_weight(rd, sc.Qy, ny, "Qy");
      require_weight(rd, sc.Qu, nu, "Qu");
      require_weight(rd, sc.Sy, ny, "Sy");
    } else {
      require_weight(rd, sc.Q, ny, "Q");
    }
    require_weight(rd, sc.R, nu, "R");
    if (sc.slack_weight) require_weight(rd, *sc.slack_weight, zone ? nu : ny, slack_name);
    if (have_U && sc.U.dim() != nu) rd.fail("U", "must have " + std::to_string(nu) + " entries");
    if (have_dU && sc.dU.dim() != nu) rd.fail("dU", "must have " + std::to_string(nu) + " entries");
    if (sc.Y && sc.Y->dim() != ny) rd.fail("Y", "must have " + std::to_string(ny) + " entries");
    if (zone && doc.contains("target") && sc.target.size() != nu) {
      rd.fail("target", "must have " + std::to_string(nu) + " entries");
    }
    if (!zone && doc.contains("reference") && sc.reference.size() != ny) {
      rd.fail("reference", "must have " + std::to_string(ny) + " entries");
    }
    if (sc.initial_state) {
      int nd = 0;
      if (sc.model_from_modes) {
        for (const Mode& m : sc.modes) nd += m.pole.imag() == 0.0 ? 1 : 2;
      } else {
        nd = static_cast<int>(sc.F.rows());
      }
      const PlantState& st = *sc.initial_state;
      if (st.xs.size() != ny) rd.fail("initial_state.xs", "must have " + std::to_string(ny) + " entries");
      if (st.xd.size() != nd) rd.fail("initial_state.xd", "must have " + std::to_string(nd) + " entries");
      if (st.u.size() != nu) rd.fail("initial_state.u", "must have " + std::to_string(nu) + " entries");
      if (have_U && st.u.size() == nu && !sc.U.contains(st.u)) {
        rd.fail("initial_state.u", "must lie in U");
      }
    }
  }

  if (!rd.errors.empty()) throw ScenarioError(rd.errors);
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  try {
    return parse_scenario(read_file(path));
  } catch (const ScenarioError& e) {
    std::vector<std::string> errs;
    for (const std::string& s : e.errors()) errs.push_back(path.string() + ": " + s);
    throw ScenarioError(errs);
  }
}

std::string scenario_to_string(const Scenario& sc) {
  const bool zone = sc.controller == ControllerKind::kZone;
  json doc;
  doc["controller"] = zone ? "zone" : "setpoint";
  json jm;
  jm["D0"] = encode_matrix(sc.D0);
  if (sc.model_from_modes) {
    json modes = json::array();
    for (const Mode& m : sc.modes) {
      modes.push_back({{"pole", encode_complex(m.pole)},
                       {"residue", encode_complex(m.residue)},
                       {"output", m.output_index},
                       {"input", m.input_index}});
    }
    jm["modes"] = modes;
  } else if (sc.F.rows() > 0) {
    jm["F"] = encode_matrix(sc.F);
    jm["Dd"] = encode_matrix(sc.Dd);
    jm["Psi"] = encode_matrix(sc.Psi);
  }
  doc["model"] = jm;
  doc["horizon"] = sc.horizon;
  json jw;
  if (zone) {
    jw["Qy"] = encode_matrix(sc.Qy);
    jw["Qu"] = encode_matrix(sc.Qu);
    jw["Sy"] = encode_matrix(sc.Sy);
  } else {
    jw["Q"] = encode_matrix(sc.Q);
  }
  jw["R"] = encode_matrix(sc.R);
  jw[zone ? "Su" : "S"] = sc.slack_weight ? encode_matrix(*sc.slack_weight) : json("auto");
  doc["weights"] = jw;
  doc["U"] = encode_rectangle(sc.U);
  doc["dU"] = encode_rectangle(sc.dU);
  if (sc.Y) doc["Y"] = encode_rectangle(*sc.Y);
  if (zone) {
    doc["target"] = encode_vector(sc.target);
  } else {
    doc["reference"] = encode_vector(sc.reference);
  }
  if (sc.initial_state) {
    doc["initial_state"] = {{"xs", encode_vector(sc.initial_state->xs)},
                            {"xd", encode_vector(sc.initial_state->xd)},
                            {"u", encode_vector(sc.initial_state->u)}};
  }
  doc["steps"] = sc.steps;
  const AnalysisTolerances& t = sc.tolerances;
  doc["tolerances"] = {{"monotone", t.monotone}, {"identity", t.identity},   {"bound", t.bound},
                       {"converge", t.converge}, {"limit", t.limit},         {"target", t.target},
                       {"consistency", t.consistency}};
  const CertificateOptions& c = sc.certificate;
  json jc = {{"margin", c.margin},
             {"su_shift", c.su_shift},
             {"phi_samples", c.phi.n_samples},
             {"phi_seed", c.phi.seed},
             {"phi_safety", c.phi.safety},
             {"rank_tol", c.rank_tol}};
  if (c.beta_override) jc["beta"] = *c.beta_override;
  if (c.phi_override) jc["phi"] = *c.phi_override;
  doc["certificate"] = jc;
  return doc.dump(2) + "\n";
}

void write_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  write_file(path, scenario_to_string(scenario));
}

ResolvedScenario resolve(const Scenario& sc) {
  const OpomModel model = sc.model();
  const PlantState init = sc.initial_state.value_or(PlantState::origin(model));
  if (sc.controller == ControllerKind::kSetpoint) {
    CertificateBundle b = certify_setpoint(model, sc.Q, sc.R, sc.horizon, sc.U, sc.reference, sc.certificate);
    bool certified = b.beta_ok;
    if (sc.slack_weight) {
      // An explicit S still counts as certified when it is a multiple β·Ŝ with β > 6·C3.
      const Matrix& S = *sc.slack_weight;
      const double beta = S.trace() / b.S_hat.trace();
      certified = (S - beta * b.S_hat).norm() <= 1e-9 * S.norm() && beta > 6.0 * b.C3;
      b.beta = beta;
      b.S = S;
      b.beta_ok = certified;
    }
    SetpointParams p{model, sc.horizon, sc.Q, sc.R, b.S, sc.U, sc.dU, sc.reference};
    SetpointSpec spec(std::move(p), certified, sc.certificate.rank_tol);
    return {ControllerSpec(std::move(spec)), std::move(b), init};
  }
  if (!sc.Y) throw ScenarioError({"Y: missing (required for zone control)"});
  CertificateBundle b = certify_zone(model, sc.Qy, sc.Qu, sc.R, sc.horizon, sc.U, *sc.Y, sc.target,
                                     sc.certificate, sc.slack_weight);
  ZoneParams p{model, sc.horizon, sc.Qy, sc.Qu, sc.R, sc.Sy, b.Su, sc.U, sc.dU, *sc.Y, sc.target};
  ZoneSpec spec(std::move(p), !sc.slack_weight.has_value());
  return {ControllerSpec(std::move(spec)), std::move(b), init};
}

// ---------------------------------------------------------------------------
// CSV trace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

struct Dims {
  int ny, nu, m;
  bool zone;
};

Dims dims_of(const ControllerSpec& spec) {
  return std::visit(
      [](const auto& s) {
        return Dims{s.model().ny(), s.model().nu(), s.horizon(),
                    std::is_same_v<std::decay_t<decltype(s)>, ZoneSpec>};
      },
      spec);
}

void push_names(std::vector<std::string>& cols, const std::string& prefix, int n) {
  for (int i = 0; i < n; ++i) cols.push_back(prefix + std::to_string(i));
}

std::vector<std::string> header_columns(const ControllerSpec& spec) {
  const Dims d = dims_of(spec);
  std::vector<std::string> cols = {"k", "V_star", "kkt_residual"};
  push_names(cols, "y_", d.ny);
  push_names(cols, "u_", d.nu);
  push_names(cols, "du_", d.nu);
  if (d.zone) {
    push_names(cols, "y_sp_", d.ny);
    push_names(cols, "delta_y_", d.ny);
    push_names(cols, "delta_u_", d.nu);
  } else {
    push_names(cols, "delta_", d.ny);
  }
  for (int j = 1; j < d.m; ++j) push_names(cols, "plan_" + std::to_string(j) + "_", d.nu);
  return cols;
}

void append_vector(std::string& line, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    line += ',';
    line += format_double(v[i]);
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string trace_csv_header(const ControllerSpec& spec) {
  std::string out;
  for (const std::string& c : header_columns(spec)) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

std::string trace_to_csv(const ClosedLoopTrace& trace) {
  const Dims d = dims_of(trace.spec);
  std::string out = trace_csv_header(trace.spec) + "\n";
  for (std::size_t k = 0; k < trace.records.size(); ++k) {
    const StepRecord& r = trace.records[k];
    std::string line = std::to_string(k + 1);
    line += ',' + format_double(r.V_star);
    line += ',' + format_double(r.kkt_residual);
    append_vector(line, r.y);
    append_vector(line, r.state_before.u + r.du.at(0));
    append_vector(line, r.du.at(0));
    if (d.zone) {
      append_vector(line, r.y_sp);
      append_vector(line, r.delta_y);
      append_vector(line, r.delta_u);
    } else {
      append_vector(line, r.delta);
    }
    for (int j = 1; j < d.m; ++j) append_vector(line, r.du.at(j));
    out += line + "\n";
  }
  return out;
}

void write_trace(const ClosedLoopTrace& trace, const std::filesystem::path& path) {
  write_file(path, trace_to_csv(trace));
}

ClosedLoopTrace parse_trace_csv(const std::string& text, const ControllerSpec& spec,
                                const PlantState& initial_state) {
  const Dims d = dims_of(spec);
  const OpomModel& model = std::visit([](const auto& s) -> const OpomModel& { return s.model(); }, spec);
  check_state(model, initial_state);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kIo, "trace is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != trace_csv_header(spec)) {
    throw Error(ErrorCode::kIo, "trace header does not match the scenario");
  }
  const std::size_t ncols = header_columns(spec).size();

  ClosedLoopTrace trace{spec, initial_state, {}, std::nullopt};
  PlantState state = initial_state;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != ncols) {
      throw Error(ErrorCode::kIo, "trace line " + std::to_string(lineno) + " has " +
                                      std::to_string(cells.size()) + " cells, expected " +
                                      std::to_string(ncols));
    }
    std::vector<double> v(ncols);
    for (std::size_t i = 0; i < ncols; ++i) {
      char* end = nullptr;
      v[i] = std::strtod(cells[i].c_str(), &end);
      if (cells[i].empty() || *end != '\0') {
        throw Error(ErrorCode::kIo, "trace line " + std::to_string(lineno) + ": bad number '" +
                                        cells[i] + "'");
      }
    }
    std::size_t at = 1;
    auto take = [&](int n) {
      Vector out(n);
      for (int i = 0; i < n; ++i) out[i] = v[at++];
      return out;
    };
    StepRecord rec;
    rec.state_before = state;
    rec.V_star = v[at++];
    rec.kkt_residual = v[at++];
    rec.y = take(d.ny);
    take(d.nu);  // applied input, implied by the plan
    rec.du.push_back(take(d.nu));
    if (d.zone) {
      rec.y_sp = take(d.ny);
      rec.delta_y = take(d.ny);
      rec.delta_u = take(d.nu);
    } else {
      rec.delta = take(d.ny);
    }
    for (int j = 1; j < d.m; ++j) rec.du.push_back(take(d.nu));
    state = plant_step(model, state, rec.du[0]);
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

ClosedLoopTrace read_trace(const std::filesystem::path& path, const ControllerSpec& spec,
                           const PlantState& initial_state) {
  return parse_trace_csv(read_file(path), spec, initial_state);
}

// ---------------------------------------------------------------------------
// Certificate document

std::string certificates_to_string(const CertificateBundle& b) {
  json doc;
  doc["kind"] = b.kind == CertificateKind::kZone ? "zone" : "setpoint";
  doc["horizon"] = b.horizon;
  doc["Qbar"] = encode_matrix(b.Qbar);
  doc["G"] = encode_matrix(b.G);
  doc["Z"] = encode_matrix(b.Z);
  doc["S_hat"] = encode_matrix(b.S_hat);
  doc["beta"] = b.beta;
  doc["S"] = encode_matrix(b.S);
  doc["C3"] = b.C3;
  doc["phi"] = b.phi;
  doc["H"] = encode_matrix(b.H);
  doc["Su"] = encode_matrix(b.Su);
  doc["gammaZ"] = b.gammaZ;
  doc["gammaQbar"] = b.gammaQbar;
  doc["gammaZminusR"] = b.gammaZminusR;
  doc["u_r"] = encode_vector(b.u_r);
  doc["lyapunov_residual"] = b.lyapunov_residual;
  doc["g_identity_residual"] = b.g_identity_residual;
  doc["flags"] = {{"lyapunov_ok", b.lyapunov_ok},
                  {"g_identity_ok", b.g_identity_ok},
                  {"beta_ok", b.beta_ok},
                  {"su_ok", b.su_ok},
                  {"phi_heuristic", b.phi_heuristic},
                  {"reference_admissible", b.reference_admissible},
                  {"target_admissible", b.target_admissible}};
  return doc.dump(2) + "\n";
}

CertificateBundle parse_certificates(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kIo, std::string("certificate parse error: ") + e.what());
  }
  Reader rd;
  CertificateBundle b;
  auto mat = [&](const char* key, Matrix& dst) {
    if (!doc.contains(key)) {
      rd.fail(key, "missing");
    } else if (auto m = rd.matrix(doc[key], key)) {
      dst = *m;
    }
  };
  auto num = [&](const char* key, double& dst) {
    if (!doc.contains(key)) {
      rd.fail(key, "missing");
    } else if (auto v = rd.number(doc[key], key)) {
      dst = *v;
    }
  };
  auto flag = [&](const char* key, bool& dst) {
    if (doc.contains("flags") && doc["flags"].contains(key) && doc["flags"][key].is_boolean()) {
      dst = doc["flags"][key].get<bool>();
    } else {
      rd.fail(std::string("flags.") + key, "missing or not a boolean");
    }
  };
  b.kind = doc.value("kind", "setpoint") == "zone" ? CertificateKind::kZone : CertificateKind::kSetpoint;
  b.horizon = doc.value("horizon", 1);
  mat("Qbar", b.Qbar);
  mat("G", b.G);
  mat("Z", b.Z);
  mat("S_hat", b.S_hat);
  num("beta", b.beta);
  mat("S", b.S);
  num("C3", b.C3);
  num("phi", b.phi);
  mat("H", b.H);
  mat("Su", b.Su);
  num("gammaZ", b.gammaZ);
  num("gammaQbar", b.gammaQbar);
  num("gammaZminusR", b.gammaZminusR);
  if (doc.contains("u_r")) {
    if (doc["u_r"].is_array() && doc["u_r"].empty()) {
      b.u_r = Vector(0);
    } else if (auto v = rd.vector(doc["u_r"], "u_r")) {
      b.u_r = *v;
    }
  }
  num("lyapunov_residual", b.lyapunov_residual);
  num("g_identity_residual", b.g_identity_residual);
  flag("lyapunov_ok", b.lyapunov_ok);
  flag("g_identity_ok", b.g_identity_ok);
  flag("beta_ok", b.beta_ok);
  flag("su_ok", b.su_ok);
  flag("phi_heuristic", b.phi_heuristic);
  flag("reference_admissible", b.reference_admissible);
  flag("target_admissible", b.target_admissible);
  if (!rd.errors.empty()) throw Error(ErrorCode::kIo, "invalid certificate document: " + join(rd.errors));
  return b;
}

void write_certificates(const CertificateBundle& bundle, const std::filesystem::path& path) {
  write_file(path, certificates_to_string(bundle));
}

CertificateBundle read_certificates(const std::filesystem::path& path) {
  return parse_certificates(read_file(path));
}

}  // namespace ihmpc
