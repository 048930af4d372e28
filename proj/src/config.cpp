#include "homlab/cli.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace homlab {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// Items separated by commas and/or whitespace.
std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

template <class T>
T parse_number(const std::string& text) {
    const std::string s = trim(text);
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ParameterError("'" + s + "' is not a valid number");
    return value;
}

double parse_double(const std::string& s) { return parse_number<double>(s); }
int parse_int(const std::string& s) { return parse_number<int>(s); }

std::uint64_t parse_u64(const std::string& s) {
    if (!trim(s).empty() && trim(s)[0] == '-') throw ParameterError("'" + trim(s) + "' must be non-negative");
    return parse_number<std::uint64_t>(s);
}

std::size_t parse_size(const std::string& s) { return static_cast<std::size_t>(parse_u64(s)); }

bool parse_bool(const std::string& s) {
    const std::string k = lower(trim(s));
    if (k == "true" || k == "yes" || k == "on" || k == "1") return true;
    if (k == "false" || k == "no" || k == "off" || k == "0") return false;
    throw ParameterError("'" + trim(s) + "' is not a boolean");
}

/// Decimal or p/q fraction.
double parse_fraction(const std::string& s) {
    const auto slash = s.find('/');
    if (slash == std::string::npos) return parse_double(s);
    const double num = parse_double(s.substr(0, slash));
    const double den = parse_double(s.substr(slash + 1));
    if (den == 0.0) throw ParameterError("'" + s + "' divides by zero");
    return num / den;
}

std::vector<double> parse_doubles(const std::string& v, std::size_t count) {
    auto items = split_list(v);
    if (items.size() != count)
        throw ParameterError("expected " + std::to_string(count) + " numbers, got " + std::to_string(items.size()));
    std::vector<double> out;
    for (const auto& it : items) out.push_back(parse_double(it));
    return out;
}

/// One number (multiple of the identity), three (m11 m12 m22) or four (row-major).
Mat2 parse_matrix(const std::string& v) {
    auto items = split_list(v);
    std::vector<double> x;
    for (const auto& it : items) x.push_back(parse_double(it));
    Mat2 m;
    if (x.size() == 1) {
        m = x[0] * Mat2::Identity();
    } else if (x.size() == 3) {
        m << x[0], x[1], x[1], x[2];
    } else if (x.size() == 4) {
        m << x[0], x[1], x[2], x[3];
    } else {
        throw ParameterError("a matrix needs 1, 3 or 4 numbers");
    }
    return m;
}

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt_H(double H) {
    const double k = std::round(1.0 / H);
    if (k >= 1.0 && std::abs(1.0 / k - H) <= 1e-12 * H) return "1/" + std::to_string(static_cast<long long>(k));
    return fmt(H);
}

std::string fmt_matrix(const Mat2& m) {
    return fmt(m(0, 0)) + " " + fmt(m(0, 1)) + " " + fmt(m(1, 0)) + " " + fmt(m(1, 1));
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& f) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + f(v[i]);
    return out;
}

std::string fmt_fine_n(int v) {
    if (v == kFineAuto) return "auto";
    if (v == kFineAligned) return "aligned";
    return std::to_string(v);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
    static const std::map<std::string, std::map<std::string, Setter>> s{
        {"experiment",
         {
             {"kind", [](ExperimentConfig& c, const std::string& v) { c.kind = parse_experiment_kind(trim(v)); }},
             {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_u64(v); }},
             {"threads", [](ExperimentConfig& c, const std::string& v) { c.threads = parse_int(v); }},
             {"strict", [](ExperimentConfig& c, const std::string& v) { c.strict = parse_bool(v); }},
             {"out", [](ExperimentConfig& c, const std::string& v) { c.out = trim(v); }},
         }},
        {"law",
         {
             {"type",
              [](ExperimentConfig& c, const std::string& v) {
                  const std::string k = lower(trim(v));
                  if (k == "checkerboard")
                      c.law.kind = LawKind::Checkerboard;
                  else if (k == "perturbed-periodic")
                      c.law.kind = LawKind::PerturbedPeriodic;
                  else
                      throw ParameterError("unknown law '" + trim(v) + "' (checkerboard, perturbed-periodic)");
              }},
             {"alpha", [](ExperimentConfig& c, const std::string& v) { c.law.alpha = parse_double(v); }},
             {"beta", [](ExperimentConfig& c, const std::string& v) { c.law.beta = parse_double(v); }},
             {"a_per", [](ExperimentConfig& c, const std::string& v) { c.law.a_per = parse_matrix(v); }},
             {"c_per", [](ExperimentConfig& c, const std::string& v) { c.law.c_per = parse_matrix(v); }},
             {"eta", [](ExperimentConfig& c, const std::string& v) { c.law.eta = parse_fraction(v); }},
         }},
        {"homogenization",
         {
             {"n",
              [](ExperimentConfig& c, const std::string& v) {
                  c.ns.clear();
                  for (const auto& it : split_list(v)) c.ns.push_back(parse_int(it));
              }},
             {"r", [](ExperimentConfig& c, const std::string& v) { c.r = parse_int(v); }},
             {"m", [](ExperimentConfig& c, const std::string& v) { c.m = parse_size(v); }},
             {"strategies",
              [](ExperimentConfig& c, const std::string& v) {
                  c.strategies.clear();
                  for (const auto& it : split_list(v)) c.strategies.push_back(parse_strategy(it));
              }},
             {"pool", [](ExperimentConfig& c, const std::string& v) { c.pool = parse_size(v); }},
             {"n_big", [](ExperimentConfig& c, const std::string& v) { c.n_big = parse_int(v); }},
             {"tol", [](ExperimentConfig& c, const std::string& v) { c.tol = parse_double(v); }},
         }},
        {"geometry",
         {
             {"type",
              [](ExperimentConfig& c, const std::string& v) { c.geometry.kind = parse_perforation_kind(trim(v)); }},
             {"epsilon", [](ExperimentConfig& c, const std::string& v) { c.geometry.epsilon = parse_fraction(v); }},
             {"radius_factor",
              [](ExperimentConfig& c, const std::string& v) { c.geometry.radius_factor = parse_fraction(v); }},
             {"shift",
              [](ExperimentConfig& c, const std::string& v) {
                  const auto x = parse_doubles(v, 2);
                  c.geometry.shift = Vec2(x[0], x[1]);
              }},
             {"count", [](ExperimentConfig& c, const std::string& v) { c.geometry.count = parse_size(v); }},
             {"width",
              [](ExperimentConfig& c, const std::string& v) {
                  const auto x = parse_doubles(v, 2);
                  c.geometry.width_min = x[0];
                  c.geometry.width_max = x[1];
              }},
             {"height",
              [](ExperimentConfig& c, const std::string& v) {
                  const auto x = parse_doubles(v, 2);
                  c.geometry.height_min = x[0];
                  c.geometry.height_max = x[1];
              }},
             {"seed", [](ExperimentConfig& c, const std::string& v) { c.geometry.seed = parse_u64(v); }},
         }},
        {"msfem",
         {
             {"H",
              [](ExperimentConfig& c, const std::string& v) {
                  c.Hs.clear();
                  for (const auto& it : split_list(v)) c.Hs.push_back(parse_fraction(it));
              }},
             {"methods",
              [](ExperimentConfig& c, const std::string& v) {
                  c.methods.clear();
                  for (const auto& it : split_list(v)) c.methods.push_back(parse_method(lower(it)));
              }},
             {"bubbles",
              [](ExperimentConfig& c, const std::string& v) {
                  c.bubbles.clear();
                  for (const auto& it : split_list(v)) c.bubbles.push_back(parse_bool(it));
              }},
             {"rhs",
              [](ExperimentConfig& c, const std::string& v) {
                  named_source(trim(v));
                  c.rhs = trim(v);
              }},
             {"reference_n", [](ExperimentConfig& c, const std::string& v) { c.reference_n = parse_int(v); }},
             {"fine_n",
              [](ExperimentConfig& c, const std::string& v) {
                  const std::string k = lower(trim(v));
                  if (k == "auto")
                      c.fine_n = kFineAuto;
                  else if (k == "aligned")
                      c.fine_n = kFineAligned;
                  else
                      c.fine_n = parse_int(k);
              }},
             {"kappa_scale", [](ExperimentConfig& c, const std::string& v) { c.kappa_scale = parse_double(v); }},
             {"heatmap", [](ExperimentConfig& c, const std::string& v) { c.heatmap = parse_bool(v); }},
         }},
    };
    return s;
}

/// Source lines of "section" headers and "section.key" entries.
std::map<std::string, int> line_index(const std::string& text) {
    std::map<std::string, int> lines;
    std::istringstream is(text);
    std::string raw, section;
    int no = 0;
    while (std::getline(is, raw)) {
        ++no;
        const std::string s = trim(raw);
        if (s.empty() || s[0] == ';' || s[0] == '#') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = trim(s.substr(1, s.size() - 2));
            lines.emplace(section, no);
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(s.substr(0, eq));
        lines.emplace(section.empty() ? key : section + "." + key, no);
    }
    return lines;
}

}  // namespace

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Homogenize: return "homogenize";
        case ExperimentKind::VrCompare: return "vr-compare";
        case ExperimentKind::Msfem: return "msfem";
        case ExperimentKind::MsfemRobustness: return "msfem-robustness";
    }
    return "?";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
    for (auto k : {ExperimentKind::Homogenize, ExperimentKind::VrCompare, ExperimentKind::Msfem,
                   ExperimentKind::MsfemRobustness})
        if (name == to_string(k)) return k;
    throw ParameterError("unknown experiment kind '" + name +
                         "' (homogenize, vr-compare, msfem, msfem-robustness)");
}

std::string format(const Diagnostic& d, const std::string& source) {
    std::ostringstream os;
    os << source;
    if (d.line > 0) os << ":" << d.line;
    os << ": " << (d.error ? "error" : "warning") << ": ";
    if (!d.key.empty()) os << d.key << ": ";
    os << d.message;
    return os.str();
}

bool ParsedConfig::ok() const {
    return std::none_of(diagnostics.begin(), diagnostics.end(), [](const Diagnostic& d) { return d.error; });
}

bool ValidationReport::ok() const {
    return std::none_of(diagnostics.begin(), diagnostics.end(), [](const Diagnostic& d) { return d.error; });
}

ParsedConfig parse_config(const std::string& text) {
    ParsedConfig out;
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream is(text);
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        out.diagnostics.push_back({"", static_cast<int>(e.line()), e.message(), true});
        return out;
    }
    out.lines = line_index(text);
    const auto& lines = out.lines;
    auto line_of = [&](const std::string& key) {
        const auto it = lines.find(key);
        return it == lines.end() ? 0 : it->second;
    };
    const auto& sch = schema();
    for (const auto& [section, body] : tree) {
        const auto sec = sch.find(section);
        if (body.empty()) {
            out.diagnostics.push_back({section, line_of(section), "key outside of any section", true});
            continue;
        }
        if (sec == sch.end()) {
            out.diagnostics.push_back({section, line_of(section), "unknown section", true});
            continue;
        }
        for (const auto& [key, node] : body) {
            const std::string full = section + "." + key;
            const auto setter = sec->second.find(key);
            if (setter == sec->second.end()) {
                out.diagnostics.push_back({full, line_of(full), "unknown key", true});
                continue;
            }
            try {
                setter->second(out.config, node.data());
            } catch (const Error& e) {
                out.diagnostics.push_back({full, line_of(full), e.what(), true});
            }
        }
    }
    return out;
}

ParsedConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        ParsedConfig out;
        out.diagnostics.push_back({"", 0, "cannot read configuration file", true});
        return out;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string render_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "[experiment]\n"
       << "kind = " << to_string(c.kind) << "\n"
       << "seed = " << c.seed << "\n"
       << "threads = " << c.threads << "\n"
       << "strict = " << (c.strict ? "true" : "false") << "\n"
       << "out = " << c.out << "\n\n";
    os << "[law]\n"
       << "type = " << (c.law.kind == LawKind::Checkerboard ? "checkerboard" : "perturbed-periodic") << "\n"
       << "alpha = " << fmt(c.law.alpha) << "\n"
       << "beta = " << fmt(c.law.beta) << "\n"
       << "a_per = " << fmt_matrix(c.law.a_per) << "\n"
       << "c_per = " << fmt_matrix(c.law.c_per) << "\n"
       << "eta = " << fmt(c.law.eta) << "\n\n";
    os << "[homogenization]\n"
       << "n = " << join(c.ns, [](int v) { return std::to_string(v); }) << "\n"
       << "r = " << c.r << "\n"
       << "m = " << c.m << "\n"
       << "strategies = " << join(c.strategies, [](Strategy s) { return lower(to_string(s)); }) << "\n"
       << "pool = " << c.pool << "\n"
       << "n_big = " << c.n_big << "\n"
       << "tol = " << fmt(c.tol) << "\n\n";
    const auto& g = c.geometry;
    os << "[geometry]\n"
       << "type = " << to_string(g.kind) << "\n"
       << "epsilon = " << fmt(g.epsilon) << "\n"
       << "radius_factor = " << fmt(g.radius_factor) << "\n"
       << "shift = " << fmt(g.shift.x()) << " " << fmt(g.shift.y()) << "\n"
       << "count = " << g.count << "\n"
       << "width = " << fmt(g.width_min) << " " << fmt(g.width_max) << "\n"
       << "height = " << fmt(g.height_min) << " " << fmt(g.height_max) << "\n"
       << "seed = " << g.seed << "\n\n";
    os << "[msfem]\n"
       << "H = " << join(c.Hs, fmt_H) << "\n"
       << "methods = " << join(c.methods, [](MsMethod m) { return to_string(m); }) << "\n"
       << "bubbles = " << join(c.bubbles, [](bool b) { return std::string(b ? "true" : "false"); }) << "\n"
       << "rhs = " << c.rhs << "\n"
       << "reference_n = " << c.reference_n << "\n"
       << "fine_n = " << fmt_fine_n(c.fine_n) << "\n"
       << "kappa_scale = " << fmt(c.kappa_scale) << "\n"
       << "heatmap = " << (c.heatmap ? "true" : "false") << "\n";
    return os.str();
}

namespace {

bool is_symmetric(const Mat2& m) { return std::abs(m(0, 1) - m(1, 0)) <= 1e-12 * (1.0 + m.norm()); }

void check_law(const FieldLaw& law, std::vector<Diagnostic>& d) {
    auto err = [&](const std::string& key, const std::string& msg) { d.push_back({key, 0, msg, true}); };
    if (law.kind == LawKind::Checkerboard) {
        if (!(law.alpha > 0.0) || !std::isfinite(law.alpha)) err("law.alpha", "must be positive");
        if (!(law.beta > 0.0) || !std::isfinite(law.beta)) err("law.beta", "must be positive");
        return;
    }
    if (!(law.eta > 0.0 && law.eta < 1.0)) err("law.eta", "must lie in (0, 1), got " + fmt(law.eta));
    const bool sym_a = is_symmetric(law.a_per), sym_c = is_symmetric(law.c_per);
    if (!sym_a) err("law.a_per", "must be symmetric");
    if (!sym_c) err("law.c_per", "must be symmetric");
    if (sym_a && !is_spd(law.a_per)) err("law.a_per", "must be positive definite");
    if (sym_a && sym_c && is_spd(law.a_per) && !is_spd(law.a_per + law.c_per))
        err("law.c_per", "a_per + c_per must be positive definite");
}

int resolve_fine_n(const ExperimentConfig& c, const CoarseMesh& mesh, const PerforationSet& perf) {
    if (c.fine_n == kFineAligned) return c.reference_n / mesh.k();
    if (c.fine_n == kFineAuto) return default_fine_n(mesh, perf);
    return c.fine_n;
}

/// Pair offsets within the truncation radius n / 2 up to lattice symmetry.
double pair_problem_estimate(int n) {
    const double radius = 0.5 * n;
    return std::max(1.0, std::numbers::pi * radius * radius / 8.0);
}

}  // namespace

int effective_fine_n(const ExperimentConfig& c, const CoarseMesh& mesh, const PerforationSet& perf) {
    return resolve_fine_n(c, mesh, perf);
}

std::vector<PerforationSpec> experiment_geometries(const ExperimentConfig& c) {
    if (c.kind != ExperimentKind::MsfemRobustness) return {c.geometry};
    PerforationSpec a = c.geometry, b = c.geometry;
    a.kind = PerforationKind::PeriodicDiscs;
    b.kind = PerforationKind::ShiftedPeriodicDiscs;
    return {a, b};
}

ValidationReport validate(const ExperimentConfig& c) {
    ValidationReport rep;
    auto& d = rep.diagnostics;
    auto err = [&](const std::string& key, const std::string& msg) { d.push_back({key, 0, msg, true}); };
    auto warn = [&](const std::string& key, const std::string& msg) { d.push_back({key, 0, msg, !!c.strict}); };

    if (c.threads < 1) err("experiment.threads", "must be at least 1");
    if (c.out.empty()) err("experiment.out", "must not be empty");

    const bool homog = c.kind == ExperimentKind::Homogenize || c.kind == ExperimentKind::VrCompare;
    if (homog) {
        const std::size_t before = d.size();
        check_law(c.law, d);
        const bool law_ok = d.size() == before;
        bool sizes_ok = !c.ns.empty();
        if (c.ns.empty()) err("homogenization.n", "needs at least one size");
        for (int n : c.ns)
            if (n < 1) {
                err("homogenization.n", "sizes must be at least 1, got " + std::to_string(n));
                sizes_ok = false;
            }
        if (c.r < 1) err("homogenization.r", "must be at least 1");
        if (c.m < 2) err("homogenization.m", "needs at least two samples");
        if (!(c.tol > 0.0 && c.tol < 1.0)) err("homogenization.tol", "must lie in (0, 1)");
        if (c.n_big < 0) err("homogenization.n_big", "must be non-negative (0 selects the default)");

        std::vector<Strategy> strategies = c.strategies;
        if (c.kind == ExperimentKind::Homogenize) strategies = {Strategy::MC};
        if (c.kind == ExperimentKind::VrCompare) {
            if (strategies.empty()) err("homogenization.strategies", "needs at least one strategy");
            if (std::find(strategies.begin(), strategies.end(), Strategy::MC) == strategies.end())
                err("homogenization.strategies", "vr-compare needs mc as the baseline");
            std::set<Strategy> seen;
            for (auto s : strategies)
                if (!seen.insert(s).second)
                    err("homogenization.strategies", "duplicate strategy " + lower(to_string(s)));
        }
        const bool uses_cv = std::any_of(strategies.begin(), strategies.end(), [](Strategy s) {
            return s == Strategy::ControlVariate1 || s == Strategy::ControlVariate2;
        });
        const bool uses_sqs = std::any_of(strategies.begin(), strategies.end(),
                                          [](Strategy s) { return s == Strategy::SQS1 || s == Strategy::SQS2; });
        const bool uses_sqs2 = std::find(strategies.begin(), strategies.end(), Strategy::SQS2) != strategies.end();
        if (uses_cv && c.law.kind != LawKind::PerturbedPeriodic)
            err("law.type", "control variates need the perturbed-periodic law");
        if (uses_cv && sizes_ok)
            for (int n : c.ns)
                if (n < 2) err("homogenization.n", "control variates need n >= 2");
        if (uses_sqs2 && c.pool < c.m) err("homogenization.pool", "must be at least m");
        if (uses_sqs && law_ok && sizes_ok) {
            const double p = c.law.probability();
            for (int n : c.ns) {
                const double ones = p * n * n;
                if (std::abs(ones - std::round(ones)) > 1e-9)
                    err("homogenization.n", "quasirandom selection needs p n^2 integral; n = " + std::to_string(n) +
                                                " gives " + fmt(ones));
            }
        }

        double solves = 0.0, memory = 0.0;
        for (int n : c.ns) {
            const double dofs = std::pow(static_cast<double>(std::max(n, 1)) * std::max(c.r, 1), 2);
            memory = std::max(memory, dofs * 220.0);
            for (auto s : strategies) {
                const double m = static_cast<double>(c.m);
                switch (s) {
                    case Strategy::MC: solves += 2 * m; break;
                    case Strategy::Antithetic: solves += 4 * m; break;
                    case Strategy::ControlVariate1: solves += 2 * m + 4; break;
                    case Strategy::ControlVariate2: solves += 2 * m + 4 + 2 * pair_problem_estimate(n); break;
                    case Strategy::SQS1:
                    case Strategy::SQS2: {
                        const int nb = c.n_big > 0 ? c.n_big : std::max(3 * n, 24);
                        solves += 2 * m + 4;
                        memory = std::max(memory, std::pow(static_cast<double>(nb) * c.r, 2) * 220.0);
                        break;
                    }
                }
            }
        }
        rep.estimated_solves = solves;
        rep.estimated_memory_mb = memory / 1048576.0;
        return rep;
    }

    // MsFEM kinds.
    if (c.Hs.empty()) err("msfem.H", "needs at least one coarse size");
    std::vector<int> ks;
    for (double H : c.Hs) {
        const double k = std::round(1.0 / H);
        if (!(H > 0.0) || k < 1.0 || std::abs(1.0 / k - H) > 1e-9 * H)
            err("msfem.H", "1/H must be a positive integer, got H = " + fmt(H));
        else
            ks.push_back(static_cast<int>(k));
    }
    if (c.methods.empty()) err("msfem.methods", "needs at least one method");
    if (c.bubbles.empty()) err("msfem.bubbles", "needs at least one of true, false");
    if (c.reference_n < 2) err("msfem.reference_n", "must be at least 2");
    if (c.fine_n < kFineAligned || c.fine_n == 1) err("msfem.fine_n", "must be auto, aligned or an integer >= 2");
    if (!(c.kappa_scale > 0.0) || !std::isfinite(c.kappa_scale)) err("msfem.kappa_scale", "must be positive");
    if (c.kind == ExperimentKind::MsfemRobustness && c.geometry.kind != PerforationKind::PeriodicDiscs &&
        c.geometry.kind != PerforationKind::ShiftedPeriodicDiscs)
        err("geometry.type", "msfem-robustness compares disc lattices; use periodic-discs");

    std::vector<PerforationSet> sets;
    for (const auto& spec : experiment_geometries(c)) {
        try {
            sets.push_back(build_perforations(spec));
        } catch (const GeometryError& e) {
            const bool disc = spec.kind == PerforationKind::PeriodicDiscs ||
                              spec.kind == PerforationKind::ShiftedPeriodicDiscs;
            err(disc ? "geometry.radius_factor" : "geometry.type", e.what());
        } catch (const ParameterError& e) {
            err(spec.kind == PerforationKind::RandomRectangles ? "geometry.width" : "geometry.epsilon", e.what());
        }
    }
    if (!rep.ok() || sets.size() != experiment_geometries(c).size()) return rep;

    double solves = 0.0, memory = 0.0;
    std::set<std::string> reported;
    auto resolution = [&](const PerforationSet& perf, double h, const std::string& key, const std::string& what) {
        for (const auto& w : perf.resolution_warnings(h))
            if (reported.insert(what + w).second) warn(key, what + ": " + w);
    };
    for (const auto& perf : sets) {
        resolution(perf, 1.0 / c.reference_n, "msfem.reference_n", "reference grid");
        solves += 1.0;
        const double N = c.reference_n;
        memory = std::max(memory, N * N * (40.0 + 12.0 * std::log2(std::max(N, 2.0))));
        for (int k : ks) {
            const CoarseMesh mesh(k);
            const int fine = resolve_fine_n(c, mesh, perf);
            if (fine < 2) {
                err("msfem.fine_n", "H = 1/" + std::to_string(k) + " leaves fewer than 2 fine cells per element");
                continue;
            }
            if (c.reference_n % (k * fine) != 0)
                err("msfem.reference_n", "must be a multiple of k * fine_n = " + std::to_string(k * fine) +
                                             " for H = 1/" + std::to_string(k));
            resolution(perf, 1.0 / (static_cast<double>(k) * fine), "msfem.fine_n",
                       "local grid for H = 1/" + std::to_string(k));
            const double elements = static_cast<double>(k) * k;
            const double side = fine + 1.0;
            for (auto m : c.methods)
                for (bool b : c.bubbles) {
                    if (m == MsMethod::CrouzeixRaviart)
                        solves += elements;
                    else if (m == MsMethod::MsFEMLinear)
                        solves += elements * (b ? 2.0 : 1.0);
                    else
                        solves += b ? elements : 0.0;
                    memory = std::max(memory, elements * side * side * 8.0 * 8.0 + side * side * 400.0);
                }
        }
    }
    rep.estimated_solves = solves;
    rep.estimated_memory_mb = memory / 1048576.0;
    return rep;
}

}  // namespace homlab
