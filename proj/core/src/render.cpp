#include "cirl/render.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace cirl {

namespace {

constexpr int kCell = 60;
constexpr int kMargin = 30;

std::string xml_escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string svg_header(int width, int height, const std::string& title) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    os << "<text x=\"" << kMargin << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
       << xml_escape(title) << "</text>\n";
    return os.str();
}

std::string hex_colour(int r, int g, int b) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

/// White at 0, saturating to red (+1) or blue (-1).
std::string diverging(double t) {
    t = std::clamp(t, -1.0, 1.0);
    const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(t))));
    return t >= 0.0 ? hex_colour(255, fade, fade) : hex_colour(fade, fade, 255);
}

}  // namespace

std::string format_number(double value) {
    if (value == 0.0) return "0";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::string grid_csv(const Gridworld& world, const Vector& per_state) {
    if (per_state.size() != world.n_states()) throw std::invalid_argument("vector length does not match N_S");
    std::ostringstream os;
    for (int r = 0; r < world.spec().height; ++r) {
        for (int c = 0; c < world.spec().width; ++c) {
            if (c > 0) os << ',';
            os << format_number(per_state(world.state_of({r, c})));
        }
        os << '\n';
    }
    return os.str();
}

std::string policy_grid_csv(const Gridworld& world, const DeterministicPolicy& policy) {
    std::ostringstream os;
    for (int r = 0; r < world.spec().height; ++r) {
        for (int c = 0; c < world.spec().width; ++c) {
            if (c > 0) os << ',';
            const int s = world.state_of({r, c});
            if (world.is_exit(s) || policy.action_of[s] == kNoAction) {
                os << '.';
            } else {
                os << policy.action_of[s];
            }
        }
        os << '\n';
    }
    return os.str();
}

std::string q_table_csv(const Gridworld& world, const Matrix& q) {
    std::ostringstream os;
    os << "state,row,col";
    for (int a = 0; a < world.n_actions(); ++a) {
        const CareAction ca = world.care_action(a);
        os << ',' << to_string(ca.direction) << '_' << ca.care;
    }
    os << '\n';
    for (int s = 0; s < world.sink(); ++s) {
        const Cell cell = world.cell_of(s);
        os << s << ',' << cell.row << ',' << cell.col;
        for (int a = 0; a < world.n_actions(); ++a) os << ',' << format_number(q(s, a));
        os << '\n';
    }
    return os.str();
}

std::string provenance_comment(const std::string& env_fingerprint, std::optional<std::uint64_t> seed) {
    return "# env_fingerprint=" + env_fingerprint + " seed=" + (seed ? std::to_string(*seed) : "none") + "\n";
}

Vector parse_grid_csv(const Gridworld& world, const std::string& text) {
    Vector out = Vector::Zero(world.n_states());
    std::istringstream in(text);
    std::string line;
    int r = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (r >= world.spec().height) throw std::invalid_argument("grid CSV has too many rows");
        std::istringstream cells(line);
        std::string field;
        int c = 0;
        while (std::getline(cells, field, ',')) {
            if (c >= world.spec().width) throw std::invalid_argument("grid CSV row has too many columns");
            if (field != ".") {
                double v = 0.0;
                const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
                if (res.ec != std::errc() || res.ptr != field.data() + field.size())
                    throw std::invalid_argument("grid CSV cell '" + field + "' is not a number");
                out(world.state_of({r, c})) = v;
            }
            ++c;
        }
        if (c != world.spec().width) throw std::invalid_argument("grid CSV row has too few columns");
        ++r;
    }
    if (r != world.spec().height) throw std::invalid_argument("grid CSV has too few rows");
    return out;
}

std::string ascii_grid(const Gridworld& world, const Vector& per_state) {
    std::ostringstream os;
    for (int r = 0; r < world.spec().height; ++r) {
        for (int c = 0; c < world.spec().width; ++c) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%10.2f", per_state(world.state_of({r, c})));
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

std::string ascii_policy(const Gridworld& world, const DeterministicPolicy& policy) {
    static const char* kGlyph[kDirections] = {"^", "v", "<", ">"};
    std::ostringstream os;
    for (int r = 0; r < world.spec().height; ++r) {
        for (int c = 0; c < world.spec().width; ++c) {
            const int s = world.state_of({r, c});
            std::string cell;
            switch (world.kind(s)) {
                case CellKind::cliff: cell = "C"; break;
                case CellKind::goal: cell = "G"; break;
                default: {
                    const int a = policy.action_of[s];
                    if (a == kNoAction) {
                        cell = "?";
                    } else {
                        const CareAction ca = world.care_action(a);
                        cell = std::string(kGlyph[static_cast<int>(ca.direction)]) + std::to_string(ca.care);
                    }
                }
            }
            char buf[16];
            std::snprintf(buf, sizeof buf, "%5s", cell.c_str());
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

std::string svg_heatmap(const Gridworld& world, const Vector& per_state, const std::string& title) {
    const int w = world.spec().width;
    const int h = world.spec().height;
    double scale = 0.0;
    for (int s = 0; s < world.sink(); ++s) scale = std::max(scale, std::abs(per_state(s)));
    std::ostringstream os;
    os << svg_header(2 * kMargin + w * kCell, 2 * kMargin + h * kCell, title);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const int s = world.state_of({r, c});
            const double v = per_state(s);
            const double t = scale > 0.0 ? v / scale : 0.0;
            const int x = kMargin + c * kCell;
            const int y = kMargin + r * kCell;
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\""
               << kCell << "\" fill=\"" << diverging(t) << "\" stroke=\"#444444\"/>\n";
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.1f", v);
            os << "<text x=\"" << x + kCell / 2 << "\" y=\"" << y + kCell / 2 + 4
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << buf
               << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_policy(const Gridworld& world, const DeterministicPolicy& policy,
                       const std::string& title) {
    static constexpr int kDx[kDirections] = {0, 0, -1, 1};
    static constexpr int kDy[kDirections] = {-1, 1, 0, 0};
    const int w = world.spec().width;
    const int h = world.spec().height;
    std::ostringstream os;
    os << svg_header(2 * kMargin + w * kCell, 2 * kMargin + h * kCell, title);
    os << "<defs><marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"3\" refY=\"3\" "
          "orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"#222222\"/></marker></defs>\n";
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const int s = world.state_of({r, c});
            const int x = kMargin + c * kCell;
            const int y = kMargin + r * kCell;
            const CellKind kind = world.kind(s);
            const char* fill = kind == CellKind::cliff ? "#d9534f" : kind == CellKind::goal ? "#5cb85c" : "#f5f5f5";
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\""
               << kCell << "\" fill=\"" << fill << "\" stroke=\"#444444\"/>\n";
            if (kind != CellKind::ground || policy.action_of[s] == kNoAction) continue;
            const CareAction ca = world.care_action(policy.action_of[s]);
            const double len = 0.45 * kCell * ca.care / world.levels();
            const int d = static_cast<int>(ca.direction);
            const double cx = x + kCell / 2.0;
            const double cy = y + kCell / 2.0;
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "<line class=\"arrow\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                          "stroke=\"#222222\" stroke-width=\"2\" marker-end=\"url(#head)\"/>\n",
                          cx, cy, cx + kDx[d] * len, cy + kDy[d] * len);
            os << buf;
        }
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace cirl
