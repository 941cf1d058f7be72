#include "tvest/specfile.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tvest/systems.hpp"

namespace tvest {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct Entry {
  std::string raw;  // trimmed unquoted text, or the text between quotes
  bool quoted = false;
  Expr expr;  // parsed when quoted
  int line = 0;
};

struct Section {
  bool present = false;
  int line = 0;
  std::map<std::string, Entry> entries;
};

// strips the "(line i, column j)" suffix the expression parser appends
std::string parse_reason(const char* what) {
  std::string w = what;
  auto cut = w.rfind(" (line ");
  return cut == std::string::npos ? w : w.substr(0, cut);
}

class Reader {
 public:
  Reader(std::istream& in, std::string origin) : origin_(std::move(origin)) { read(in); }

  SpecFile build();

 private:
  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw SpecError(origin_, line, msg);
  }

  void read(std::istream& in) {
    std::string line;
    int no = 0;
    Section* cur = nullptr;
    while (std::getline(in, line)) {
      ++no;
      std::string body = strip_comment(line, no);
      std::string t = trim(body);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']') fail(no, "unterminated section header");
        std::string name = trim(t.substr(1, t.size() - 2));
        if (name != "system" && name != "chain" && name != "estimator" && name != "sim") {
          fail(no, "unknown section [" + name + "]");
        }
        cur = &sections_[name];
        if (cur->present) fail(no, "duplicate section [" + name + "]");
        cur->present = true;
        cur->line = no;
        continue;
      }
      if (!cur) fail(no, "key outside any section");
      auto eq = body.find('=');
      if (eq == std::string::npos) fail(no, "expected key = value");
      std::string key = trim(body.substr(0, eq));
      if (key.empty()) fail(no, "empty key");
      Entry e;
      e.line = no;
      std::string val = trim(body.substr(eq + 1));
      if (!val.empty() && val.front() == '"') {
        if (val.size() < 2 || val.back() != '"') fail(no, "unterminated quoted value");
        e.quoted = true;
        e.raw = val.substr(1, val.size() - 2);
        // column of the first expression character in the original line
        int base = static_cast<int>(line.find('"')) + 1;
        try {
          e.expr = parse(e.raw);
        } catch (const ParseError& pe) {
          std::ostringstream os;
          os << "syntax error at " << no << ":" << base + pe.column << ": "
             << parse_reason(pe.what());
          fail(no, os.str());
        }
      } else {
        if (val.empty()) fail(no, "empty value for '" + key + "'");
        e.raw = val;
      }
      if (!cur->entries.emplace(key, std::move(e)).second) {
        fail(no, "duplicate key '" + key + "'");
      }
    }
  }

  std::string strip_comment(const std::string& line, int no) const {
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quotes = !in_quotes;
      if (line[i] == '#' && !in_quotes) return line.substr(0, i);
    }
    if (in_quotes) fail(no, "unterminated quoted value");
    return line;
  }

  // --- typed lookups ---------------------------------------------------------

  const Entry* find(const std::string& sec, const std::string& key) const {
    auto s = sections_.find(sec);
    if (s == sections_.end() || !s->second.present) return nullptr;
    auto it = s->second.entries.find(key);
    return it == s->second.entries.end() ? nullptr : &it->second;
  }

  double get_double(const Entry& e, const std::string& key) const {
    if (e.quoted) fail(e.line, "'" + key + "' takes a number, not a quoted expression");
    try {
      std::size_t used = 0;
      double v = std::stod(e.raw, &used);
      if (used != e.raw.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      fail(e.line, "bad number '" + e.raw + "' for '" + key + "'");
    }
  }

  long long get_int(const Entry& e, const std::string& key) const {
    if (e.quoted) fail(e.line, "'" + key + "' takes an integer");
    try {
      std::size_t used = 0;
      long long v = std::stoll(e.raw, &used);
      if (used != e.raw.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      fail(e.line, "bad integer '" + e.raw + "' for '" + key + "'");
    }
  }

  bool get_bool(const Entry& e, const std::string& key) const {
    if (e.raw == "true") return true;
    if (e.raw == "false") return false;
    fail(e.line, "'" + key + "' must be true or false");
  }

  Expr get_expr(const Entry& e, const std::string& key) const {
    if (!e.quoted) fail(e.line, "'" + key + "' must be a quoted expression");
    return e.expr;
  }

  ScalarTimeFunction get_timefun(const Entry& e, const std::string& key, FnClass cls) const {
    Expr body = get_expr(e, key);
    for (VarRef v : free_vars(body)) {
      if (v.kind != VarKind::T) {
        fail(e.line, "'" + key + "' may only depend on t, found " + v.name());
      }
    }
    return ScalarTimeFunction(body, cls);
  }

  // vocabulary: which variable kinds an expression may use, with index caps
  struct Vocab {
    int nx = 0, nd = 0, ny = 0, nz = 0;
    bool w = false, s = false;
  };

  void check_vocab(const Expr& e, const Vocab& v, int line, const std::string& key) const {
    for (VarRef r : free_vars(e)) {
      bool ok = false;
      switch (r.kind) {
        case VarKind::T: ok = true; break;
        case VarKind::X: ok = r.index <= v.nx; break;
        case VarKind::D: ok = r.index <= v.nd; break;
        case VarKind::Y: ok = r.index <= v.ny; break;
        case VarKind::Z: ok = r.index <= v.nz; break;
        case VarKind::W: ok = v.w; break;
        case VarKind::S: ok = v.s; break;
      }
      if (!ok) fail(line, "'" + key + "' must not depend on " + r.name());
    }
  }

  std::complex<double> parse_complex(const std::string& text, int line) const {
    std::string t = trim(text);
    if (t.empty()) fail(line, "empty root");
    auto number = [&](const std::string& part) -> double {
      if (part.empty() || part == "+") return 1.0;
      if (part == "-") return -1.0;
      try {
        std::size_t used = 0;
        double v = std::stod(part, &used);
        if (used != part.size()) throw std::invalid_argument("trailing characters");
        return v;
      } catch (const std::exception&) {
        fail(line, "bad root '" + text + "'");
      }
    };
    if (t.back() != 'i' && t.back() != 'I') return {number(t), 0.0};
    std::string body = t.substr(0, t.size() - 1);
    // split real and imaginary parts at the last sign not owned by an exponent
    for (std::size_t i = body.size(); i-- > 1;) {
      if ((body[i] == '+' || body[i] == '-') && body[i - 1] != 'e' && body[i - 1] != 'E') {
        return {number(body.substr(0, i)), number(body.substr(i))};
      }
    }
    return {0.0, number(body)};
  }

  // every entry must belong to the section's vocabulary of keys
  void check_keys(const std::string& sec, const std::set<std::string>& plain,
                  const std::set<std::string>& indexed) const {
    auto s = sections_.find(sec);
    if (s == sections_.end()) return;
    for (const auto& [key, entry] : s->second.entries) {
      if (plain.count(key)) continue;
      auto dot = key.find('.');
      if (dot != std::string::npos && indexed.count(key.substr(0, dot))) {
        const std::string idx = key.substr(dot + 1);
        if (!idx.empty() &&
            idx.find_first_not_of("0123456789") == std::string::npos) {
          continue;
        }
      }
      fail(entry.line, "unknown key '" + key + "' in [" + sec + "]");
    }
  }

  // collects key.1 .. key.count, requiring a contiguous run
  std::vector<const Entry*> indexed_run(const std::string& sec, const std::string& key,
                                        int count, bool required, int sec_line) const {
    std::vector<const Entry*> out;
    for (int i = 1; i <= count; ++i) {
      const Entry* e = find(sec, key + "." + std::to_string(i));
      if (!e) {
        if (required) fail(sec_line, "missing '" + key + "." + std::to_string(i) + "'");
        return {};
      }
      out.push_back(e);
    }
    const Entry* extra = find(sec, key + "." + std::to_string(count + 1));
    if (extra) fail(extra->line, "'" + key + "' index exceeds the declared dimension");
    return out;
  }

  std::string origin_;
  std::map<std::string, Section> sections_;
};

SpecFile Reader::build() {
  SpecFile out;
  out.origin = origin_;

  auto sys_sec = sections_.find("system");
  if (sys_sec == sections_.end() || !sys_sec->second.present) {
    fail(1, "missing [system] section");
  }
  const int sys_line = sys_sec->second.line;
  check_keys("system",
             {"n", "d", "known_d", "equilibrium", "name", "rfc_mu", "rfc_a"},
             {"D", "f", "h"});

  SystemModel& sys = out.sys;
  const Entry* n_e = find("system", "n");
  if (!n_e) fail(sys_line, "missing 'n'");
  long long n = get_int(*n_e, "n");
  if (n < 1 || n > 8) fail(n_e->line, "'n' must be between 1 and 8");
  sys.n = static_cast<int>(n);
  if (const Entry* e = find("system", "d")) {
    long long d = get_int(*e, "d");
    if (d < 0 || d > 8) fail(e->line, "'d' must be between 0 and 8");
    sys.l_dist = static_cast<int>(d);
  }
  if (const Entry* e = find("system", "known_d")) sys.known_disturbance = get_bool(*e, "known_d");
  if (const Entry* e = find("system", "equilibrium")) {
    sys.origin_is_equilibrium = get_bool(*e, "equilibrium");
  }
  if (const Entry* e = find("system", "name")) {
    sys.name = e->raw;
  } else {
    auto stem = std::filesystem::path(origin_).stem().string();
    sys.name = stem.empty() ? "spec" : stem;
  }

  for (const Entry* e : indexed_run("system", "D", sys.l_dist, true, sys_line)) {
    if (e->quoted) fail(e->line, "'D' entries are two numbers, lo, hi");
    auto comma = e->raw.find(',');
    if (comma == std::string::npos) fail(e->line, "'D' entries need a comma");
    Entry lo{trim(e->raw.substr(0, comma)), false, nullptr, e->line};
    Entry hi{trim(e->raw.substr(comma + 1)), false, nullptr, e->line};
    double a = get_double(lo, "D"), b = get_double(hi, "D");
    if (!(a <= b)) fail(e->line, "'D' entries need lo <= hi");
    sys.D.emplace_back(a, b);
  }

  Vocab fx{sys.n, sys.l_dist, 0, 0, false, false};
  for (const Entry* e : indexed_run("system", "f", sys.n, true, sys_line)) {
    Expr fe = get_expr(*e, "f");
    check_vocab(fe, fx, e->line, "f");
    sys.f.push_back(fe);
  }

  int k_out = 0;
  while (find("system", "h." + std::to_string(k_out + 1))) ++k_out;
  if (k_out == 0) fail(sys_line, "missing 'h.1'");
  sys.k_out = k_out;
  Vocab hx{sys.n, 0, 0, 0, false, false};
  for (const Entry* e : indexed_run("system", "h", k_out, true, sys_line)) {
    Expr he = get_expr(*e, "h");
    check_vocab(he, hx, e->line, "h");
    sys.h.push_back(he);
  }

  const Entry* mu_e = find("system", "rfc_mu");
  const Entry* a_e = find("system", "rfc_a");
  if ((mu_e != nullptr) != (a_e != nullptr)) {
    fail(mu_e ? mu_e->line : a_e->line, "'rfc_mu' and 'rfc_a' come as a pair");
  }
  if (mu_e) {
    out.rfc_mu = get_timefun(*mu_e, "rfc_mu", FnClass::Kplus);
    out.rfc_a = get_expr(*a_e, "rfc_a");
    check_vocab(out.rfc_a, Vocab{0, 0, 0, 0, false, true}, a_e->line, "rfc_a");
    out.has_rfc = true;
  }

  // --- [chain] ---------------------------------------------------------------
  auto chain_sec = sections_.find("chain");
  if (chain_sec != sections_.end() && chain_sec->second.present) {
    out.has_chain = true;
    const int chain_line = chain_sec->second.line;
    check_keys("chain", {"m", "g", "a", "y_next_tilde"}, {"inject", "Psi"});

    const Entry* m_e = find("chain", "m");
    if (!m_e) fail(chain_line, "missing 'm'");
    long long m = get_int(*m_e, "m");
    if (m < 0 || m >= 8) fail(m_e->line, "'m' must be between 0 and 7");
    out.m = static_cast<int>(m);

    Vocab ty{0, 0, sys.k_out, 0, false, false};
    const Entry* g_e = find("chain", "g");
    if (!g_e) fail(chain_line, "missing 'g'");
    out.g = get_expr(*g_e, "g");
    check_vocab(out.g, ty, g_e->line, "g");
    if (const Entry* e = find("chain", "a")) {
      out.a = get_expr(*e, "a");
      Vocab ta{0, sys.known_disturbance ? sys.l_dist : 0, sys.k_out, 0, false, false};
      check_vocab(out.a, ta, e->line, "a");
    } else {
      out.a = constant(1.0);
    }
    for (int i = 1; i <= out.m; ++i) {
      const Entry* e = find("chain", "inject." + std::to_string(i));
      if (!e) {
        out.injections.push_back(constant(0.0));
        continue;
      }
      Expr inj = get_expr(*e, "inject");
      check_vocab(inj, ty, e->line, "inject");
      out.injections.push_back(inj);
    }
    if (const Entry* e = find("chain", "inject." + std::to_string(out.m + 1))) {
      fail(e->line, "'inject' index exceeds m");
    }

    auto psi_run = indexed_run("chain", "Psi", sys.n, false, chain_line);
    if (!psi_run.empty()) {
      Vocab tz{0, 0, sys.k_out, out.m, false, false};
      for (const Entry* e : psi_run) {
        Expr p = get_expr(*e, "Psi");
        check_vocab(p, tz, e->line, "Psi");
        out.Psi.push_back(p);
      }
    } else {
      for (const auto& [key, entry] : chain_sec->second.entries) {
        if (key.rfind("Psi.", 0) == 0) fail(entry.line, "'Psi' must list all n components");
      }
    }

    if (const Entry* e = find("chain", "y_next_tilde")) {
      out.y_next_tilde = get_expr(*e, "y_next_tilde");
      Vocab tv{0, sys.known_disturbance ? sys.l_dist : 0, sys.k_out, out.m, false, false};
      check_vocab(out.y_next_tilde, tv, e->line, "y_next_tilde");
    }
  }

  // --- [estimator] -------------------------------------------------------------
  auto est_sec = sections_.find("estimator");
  if (est_sec != sections_.end() && est_sec->second.present) {
    out.has_estimator = true;
    const int est_line = est_sec->second.line;
    if (!out.has_chain) fail(est_line, "[estimator] needs a [chain] section");
    check_keys("estimator",
               {"kind", "phi", "roots", "l", "R_multiplier", "R_override", "q", "beta_tilde",
                "kappa_a"},
               {});

    if (const Entry* e = find("estimator", "kind")) {
      if (e->raw == "estimator") {
        out.kind = EstimatorKind::Estimator;
      } else if (e->raw == "observer") {
        out.kind = EstimatorKind::Observer;
      } else {
        fail(e->line, "'kind' must be estimator or observer");
      }
    }

    const Entry* phi_e = find("estimator", "phi");
    if (!phi_e) fail(est_line, "missing 'phi'");
    out.phi = get_timefun(*phi_e, "phi", FnClass::Kstar);

    const Entry* roots_e = find("estimator", "roots");
    if (!roots_e) fail(est_line, "missing 'roots'");
    if (roots_e->quoted) fail(roots_e->line, "'roots' is an unquoted list");
    {
      std::stringstream ss(roots_e->raw);
      std::string part;
      while (std::getline(ss, part, ',')) {
        out.roots.push_back(parse_complex(part, roots_e->line));
      }
    }
    if (static_cast<int>(out.roots.size()) != out.m + 1) {
      fail(roots_e->line, "expected " + std::to_string(out.m + 1) + " roots, got " +
                              std::to_string(out.roots.size()));
    }

    if (const Entry* e = find("estimator", "l")) {
      out.l = get_double(*e, "l");
      if (out.l <= 0) fail(e->line, "'l' must be positive");
    }
    if (const Entry* e = find("estimator", "R_multiplier")) {
      out.R_multiplier = get_double(*e, "R_multiplier");
      if (out.R_multiplier < 1.0) fail(e->line, "'R_multiplier' must be at least 1");
    }
    if (const Entry* e = find("estimator", "R_override")) {
      out.R_override = get_double(*e, "R_override");
      if (out.R_override < 0) fail(e->line, "'R_override' must be nonnegative");
    }
    if (const Entry* e = find("estimator", "q")) {
      out.q = get_timefun(*e, "q", FnClass::Kstar);
    }
    if (const Entry* e = find("estimator", "beta_tilde")) {
      out.beta_tilde = get_timefun(*e, "beta_tilde", FnClass::Kplus);
    }
    if (const Entry* e = find("estimator", "kappa_a")) {
      out.kappa_a = get_expr(*e, "kappa_a");
      check_vocab(out.kappa_a, Vocab{0, 0, 0, 0, false, true}, e->line, "kappa_a");
    }
    if (out.kind == EstimatorKind::Observer && (!out.beta_tilde || !out.kappa_a)) {
      fail(est_line, "observers need 'beta_tilde' and 'kappa_a'");
    }
  }

  // --- [sim] -------------------------------------------------------------------
  auto sim_sec = sections_.find("sim");
  if (sim_sec != sections_.end() && sim_sec->second.present) {
    check_keys("sim", {"t0", "T", "method", "rtol", "atol", "fixed_step", "seed", "n_pieces"},
               {});
    SimSection& sim = out.sim;
    if (const Entry* e = find("sim", "t0")) sim.t0 = get_double(*e, "t0");
    if (const Entry* e = find("sim", "T")) sim.T = get_double(*e, "T");
    if (const Entry* e = find("sim", "method")) {
      if (e->raw == "rk45") {
        sim.method = Method::RK45;
      } else if (e->raw == "rk4") {
        sim.method = Method::RK4;
      } else {
        fail(e->line, "'method' must be rk45 or rk4");
      }
    }
    if (const Entry* e = find("sim", "rtol")) sim.rtol = get_double(*e, "rtol");
    if (const Entry* e = find("sim", "atol")) sim.atol = get_double(*e, "atol");
    if (const Entry* e = find("sim", "fixed_step")) sim.fixed_step = get_double(*e, "fixed_step");
    if (const Entry* e = find("sim", "seed")) {
      long long s = get_int(*e, "seed");
      if (s < 0) fail(e->line, "'seed' must be nonnegative");
      sim.seed = static_cast<std::uint64_t>(s);
    }
    if (const Entry* e = find("sim", "n_pieces")) {
      long long p = get_int(*e, "n_pieces");
      if (p < 0) fail(e->line, "'n_pieces' must be nonnegative");
      sim.n_pieces = static_cast<int>(p);
    }
    if (sim.T <= sim.t0) fail(sim_sec->second.line, "'T' must exceed 't0'");
  }

  return out;
}

}  // namespace

SpecFile parse_specfile(std::istream& in, const std::string& origin) {
  return Reader(in, origin).build();
}

SpecFile load_specfile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError(path, 0, "cannot open file");
  return parse_specfile(in, path);
}

LoadedSystem instantiate(const SpecFile& spec) {
  LoadedSystem out;
  out.origin = spec.origin;
  out.sys = spec.sys;
  out.sim = spec.sim;

  auto wrap = [&spec](const std::string& msg) {
    return std::runtime_error(spec.origin + ": " + msg);
  };

  if (spec.sys.origin_is_equilibrium) {
    auto rep = validate_model(spec.sys);
    if (!rep.origin_ok) {
      std::ostringstream os;
      os << "origin is not an equilibrium (defect " << rep.origin_defect
         << "); set equilibrium = false if that is intended";
      throw wrap(os.str());
    }
  }

  try {
    if (spec.has_chain) {
      out.chain = build_chain(spec.sys, spec.g, spec.a, spec.injections, spec.m);
      if (!spec.Psi.empty()) attach_psi(out.chain, spec.sys, spec.Psi);
      if (spec.y_next_tilde) build_closure(out.chain, spec.sys, {}, spec.y_next_tilde);
      out.has_chain = true;
    }

    if (spec.beta_tilde && spec.kappa_a) {
      out.bounds.beta_tilde = *spec.beta_tilde;
      out.bounds.kappa_a = spec.kappa_a;
      out.has_growth = true;
    }
    if (spec.has_rfc) {
      out.bounds.rfc_mu = spec.rfc_mu;
      out.bounds.rfc_a = spec.rfc_a;
      out.has_rfc = true;
    }

    if (spec.has_estimator) {
      DesignOptions opt;
      opt.l = spec.l;
      opt.R_multiplier = spec.R_multiplier;
      opt.R_override = spec.R_override;
      if (spec.q) opt.q_override = &*spec.q;
      auto design = design_gains(spec.m + 1, spec.roots, spec.phi, opt);
      if (spec.kind == EstimatorKind::Observer) {
        if (!out.has_growth) throw std::invalid_argument("observer needs beta_tilde and kappa_a");
        out.estimator = build_observer(out.chain, design, spec.phi, out.bounds);
      } else {
        out.estimator = build_estimator(out.chain, design, spec.phi);
      }
    }
  } catch (const std::invalid_argument& e) {
    throw wrap(e.what());
  }
  return out;
}

LoadedSystem load_model(const std::string& ref) {
  constexpr const char* kPrefix = "builtin:";
  if (ref.rfind(kPrefix, 0) == 0) {
    BuiltinBundle b = builtin(ref.substr(std::string(kPrefix).size()));
    LoadedSystem out;
    out.origin = ref;
    out.sys = b.sys;
    out.chain = b.chain;
    out.has_chain = true;
    out.bounds = b.bounds;
    out.has_rfc = true;
    out.has_growth = true;
    out.estimator = b.reference;
    return out;
  }
  return instantiate(load_specfile(ref));
}

}  // namespace tvest
