#include "homlab/cli.hpp"

#include <boost/tokenizer.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace homlab {

namespace {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParameterError("CSV column '" + name + "' is missing");
        return static_cast<std::size_t>(it - header.begin());
    }
};

Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot read " + path.string());
    using Tok = boost::tokenizer<boost::escaped_list_separator<char>>;
    Table t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Tok tok(line);
        std::vector<std::string> cells(tok.begin(), tok.end());
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

struct Point {
    double x, y, lo, hi;
};

struct Series {
    std::string name;
    std::string color;
    std::vector<Point> points;
    bool band = false;
};

const char* kPalette[] = {"#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

/// Line plot with optional CI bands; x on a log scale when log_x.
std::string line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel, bool log_x,
                      std::vector<Series> series) {
    constexpr double W = 720, Hh = 460, left = 80, right = 200, top = 40, bottom = 60;
    const double pw = W - left - right, ph = Hh - top - bottom;
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    std::vector<double> xs;
    for (auto& s : series) {
        std::sort(s.points.begin(), s.points.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
        for (const auto& p : s.points) {
            const double x = log_x ? std::log10(p.x) : p.x;
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min({ymin, p.y, s.band ? p.lo : p.y});
            ymax = std::max({ymax, p.y, s.band ? p.hi : p.y});
            xs.push_back(p.x);
        }
    }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
    if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
    const double pad = 0.06 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    const double xpad = 0.05 * (xmax - xmin);
    xmin -= xpad;
    xmax += xpad;
    auto X = [&](double x) { return left + ((log_x ? std::log10(x) : x) - xmin) / (xmax - xmin) * pw; };
    auto Y = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << num(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
       << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    // y ticks
    for (int i = 0; i <= 5; ++i) {
        const double v = ymin + (ymax - ymin) * i / 5.0;
        const double y = Y(v);
        os << "<line x1=\"" << left - 5 << "\" y1=\"" << num(y) << "\" x2=\"" << left << "\" y2=\"" << num(y)
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << left - 8 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << label(v)
           << "</text>\n";
    }
    // x ticks at the data abscissae
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    for (double v : xs) {
        const double x = X(v);
        os << "<line x1=\"" << num(x) << "\" y1=\"" << top + ph << "\" x2=\"" << num(x) << "\" y2=\"" << top + ph + 5
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << num(x) << "\" y=\"" << top + ph + 20 << "\" text-anchor=\"middle\">" << label(v)
           << "</text>\n";
    }
    os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << Hh - 15 << "\" text-anchor=\"middle\">"
       << escape(xlabel) << (log_x ? " (log scale)" : "") << "</text>\n";
    os << "<text x=\"20\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
       << num(top + ph / 2) << ")\">" << escape(ylabel) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        if (s.band && !s.points.empty()) {
            os << "<polygon fill=\"" << s.color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
            for (const auto& p : s.points) os << num(X(p.x)) << "," << num(Y(p.hi)) << " ";
            for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
                os << num(X(it->x)) << "," << num(Y(it->lo)) << " ";
            os << "\"/>\n";
            for (const auto& p : s.points)
                os << "<line x1=\"" << num(X(p.x)) << "\" y1=\"" << num(Y(p.lo)) << "\" x2=\"" << num(X(p.x))
                   << "\" y2=\"" << num(Y(p.hi)) << "\" stroke=\"" << s.color << "\"/>\n";
        }
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : s.points) os << num(X(p.x)) << "," << num(Y(p.y)) << " ";
        os << "\"/>\n";
        for (const auto& p : s.points)
            os << "<circle cx=\"" << num(X(p.x)) << "\" cy=\"" << num(Y(p.y)) << "\" r=\"3\" fill=\"" << s.color
               << "\"/>\n";
        const double ly = top + 10 + 18.0 * static_cast<double>(k);
        os << "<line x1=\"" << W - right + 15 << "\" y1=\"" << num(ly) << "\" x2=\"" << W - right + 40 << "\" y2=\""
           << num(ly) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << W - right + 46 << "\" y=\"" << num(ly + 4) << "\">" << escape(s.name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

/// Heatmap of a value sampled on a regular grid; columns x,y,value.
std::string heatmap(const std::string& title, const Table& t) {
    const auto cx = t.column("x"), cy = t.column("y"), cv = t.header.size() - 1;
    std::vector<double> xs, ys;
    double vmin = INFINITY, vmax = -INFINITY;
    for (const auto& r : t.rows) {
        xs.push_back(std::stod(r[cx]));
        ys.push_back(std::stod(r[cy]));
        const double v = std::stod(r[cv]);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    auto uniq = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v;
    };
    const auto ux = uniq(xs), uy = uniq(ys);
    if (!(vmax > vmin)) vmax = vmin + 1.0;
    constexpr double size = 512, left = 20, top = 40;
    const double cw = size / std::max<std::size_t>(ux.size(), 1), ch = size / std::max<std::size_t>(uy.size(), 1);
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * left << "\" height=\"" << size + top + 40
       << "\" font-family=\"sans-serif\" font-size=\"12\" shape-rendering=\"crispEdges\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << num(left + size / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
       << escape(title) << "</text>\n";
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto i = static_cast<double>(std::lower_bound(ux.begin(), ux.end(), xs[k]) - ux.begin());
        const auto j = static_cast<double>(std::lower_bound(uy.begin(), uy.end(), ys[k]) - uy.begin());
        const double s = (std::stod(t.rows[k][cv]) - vmin) / (vmax - vmin);
        // Blue to yellow ramp.
        const int red = static_cast<int>(std::lround(40 + 215 * s));
        const int green = static_cast<int>(std::lround(30 + 200 * s));
        const int blue = static_cast<int>(std::lround(120 * (1 - s) + 40));
        char color[8];
        std::snprintf(color, sizeof color, "#%02x%02x%02x", red, green, blue);
        os << "<rect x=\"" << num(left + i * cw) << "\" y=\"" << num(top + size - (j + 1) * ch) << "\" width=\""
           << num(cw + 0.5) << "\" height=\"" << num(ch + 0.5) << "\" fill=\"" << color << "\"/>\n";
    }
    os << "<text x=\"" << left << "\" y=\"" << num(top + size + 25) << "\">min " << label(vmin) << ", max "
       << label(vmax) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw ParameterError("cannot write " + path.string());
}

std::string color_for(const std::string& name, std::size_t k) {
    if (name == "MC") return "#d62728";
    if (name == "Antithetic") return "#2ca02c";
    return kPalette[(k + 2) % 8];
}

}  // namespace

std::vector<std::string> regenerate_plots(const std::filesystem::path& dir) {
    std::vector<std::string> written;
    const auto estimates = dir / "estimates.csv";
    if (std::filesystem::exists(estimates)) {
        const Table t = read_csv(estimates);
        const auto cs = t.column("strategy"), cn = t.column("n"), ce = t.column("entry"), cm = t.column("mean"),
                   cc = t.column("ci95");
        for (const std::string entry : {"11", "22"}) {
            std::vector<Series> series;
            std::map<std::string, std::size_t> index;
            for (const auto& r : t.rows) {
                if (r[ce] != entry) continue;
                auto [it, fresh] = index.emplace(r[cs], series.size());
                if (fresh) series.push_back({r[cs], color_for(r[cs], series.size()), {}, true});
                const double n = std::stod(r[cn]), m = std::stod(r[cm]), c = std::stod(r[cc]);
                series[it->second].points.push_back({n * n, m, m - c, m + c});
            }
            if (series.empty()) continue;
            const std::string name = "estimates_A" + entry + ".svg";
            write_text(dir / name, line_plot("Estimate of A*_" + entry + " with 95% confidence interval",
                                             "|Q_N|", "A*_" + entry, true, series));
            written.push_back(name);
        }
    }
    const auto msfem = dir / "msfem.csv";
    if (std::filesystem::exists(msfem)) {
        const Table t = read_csv(msfem);
        const auto cmth = t.column("method"), ch = t.column("H"), cg = t.column("geometry"),
                   cb = t.column("with_bubbles");
        std::map<std::string, int> geometries;
        for (const auto& r : t.rows) geometries.emplace(r[cg], 0);
        for (const auto& [column, title, file] :
             {std::tuple{"l2_rel", "Relative L2 error", "msfem_l2.svg"},
              std::tuple{"h1_rel", "Relative broken H1 error", "msfem_h1.svg"}}) {
            const auto cv = t.column(column);
            std::vector<Series> series;
            std::map<std::string, std::size_t> index;
            for (const auto& r : t.rows) {
                std::string key = r[cmth] + (r[cb] == "1" || r[cb] == "true" ? " + bubbles" : "");
                if (geometries.size() > 1) key += " " + r[cg];
                auto [it, fresh] = index.emplace(key, series.size());
                if (fresh) series.push_back({key, kPalette[series.size() % 8], {}, false});
                const double v = std::stod(r[cv]);
                series[it->second].points.push_back({std::stod(r[ch]), v, v, v});
            }
            if (series.empty()) continue;
            write_text(dir / file, line_plot(title, "H", column, true, series));
            written.push_back(file);
        }
    }
    std::vector<std::filesystem::path> fields;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.path().extension() == ".csv" && (name.rfind("field_", 0) == 0 || name == "perforations.csv"))
            fields.push_back(e.path());
    }
    std::sort(fields.begin(), fields.end());
    for (const auto& p : fields) {
        const std::string stem = p.stem().string();
        write_text(dir / (stem + ".svg"), heatmap(stem, read_csv(p)));
        written.push_back(stem + ".svg");
    }
    return written;
}

}  // namespace homlab
