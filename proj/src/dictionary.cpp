#include "thermloc/dictionary.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace thermloc {

int MarkerBitGrid::on_count() const {
    int c = 0;
    for (uint8_t b : bits) c += b != 0;
    return c;
}

std::string MarkerBitGrid::to_bitstring() const {
    std::string s(bits.size(), '0');
    for (size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) s[i] = '1';
    return s;
}

MarkerBitGrid MarkerBitGrid::from_bitstring(int n, const std::string& s) {
    if (static_cast<int>(s.size()) != n * n)
        throw DimensionMismatch("bitstring length does not match n*n");
    MarkerBitGrid g(n);
    for (int i = 0; i < n * n; ++i) {
        if (s[i] != '0' && s[i] != '1')
            throw ConfigError("bitstring must contain only 0/1");
        g.bits[i] = s[i] == '1';
    }
    return g;
}

MarkerBitGrid rotate90(const MarkerBitGrid& g) {
    MarkerBitGrid out(g.n);
    for (int r = 0; r < g.n; ++r)
        for (int c = 0; c < g.n; ++c)
            out.set(r, c, g.at(c, g.n - 1 - r));
    return out;
}

MarkerBitGrid rotate(const MarkerBitGrid& g, int quarter_turns) {
    MarkerBitGrid out = g;
    int k = ((quarter_turns % 4) + 4) % 4;
    for (int i = 0; i < k; ++i) out = rotate90(out);
    return out;
}

int hamming(const MarkerBitGrid& a, const MarkerBitGrid& b) {
    if (a.n != b.n) throw DimensionMismatch("grids have different n");
    int d = 0;
    for (size_t i = 0; i < a.bits.size(); ++i) d += a.bits[i] != b.bits[i];
    return d;
}

int rotational_hamming(const MarkerBitGrid& a, const MarkerBitGrid& b) {
    if (a.n != b.n) throw DimensionMismatch("grids have different n");
    MarkerBitGrid rb = b;
    int best = hamming(a, rb);
    for (int k = 0; k < 3; ++k) {
        rb = rotate90(rb);
        best = std::min(best, hamming(a, rb));
    }
    return best;
}

int self_rotational_distance(const MarkerBitGrid& g) {
    MarkerBitGrid rg = g;
    int best = g.n * g.n + 1;
    for (int k = 0; k < 3; ++k) {
        rg = rotate90(rg);
        best = std::min(best, hamming(g, rg));
    }
    return best;
}

ManufacturabilityReport is_manufacturable(const MarkerBitGrid& g) {
    // Flood fill over OFF cells from the grid edge; the implicit border ring
    // is all material, so any edge-adjacent OFF cell touches it.
    const int n = g.n;
    std::vector<uint8_t> reached(static_cast<size_t>(n) * n, 0);
    std::vector<int> stack;
    auto push = [&](int r, int c) {
        const int idx = r * n + c;
        if (!g.at(r, c) && !reached[idx]) {
            reached[idx] = 1;
            stack.push_back(idx);
        }
    };
    for (int i = 0; i < n; ++i) {
        push(0, i);
        push(n - 1, i);
        push(i, 0);
        push(i, n - 1);
    }
    while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int r = idx / n, c = idx % n;
        if (r > 0) push(r - 1, c);
        if (r + 1 < n) push(r + 1, c);
        if (c > 0) push(r, c - 1);
        if (c + 1 < n) push(r, c + 1);
    }
    ManufacturabilityReport rep;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            if (!g.at(r, c) && !reached[r * n + c]) rep.trapped_cells.emplace_back(r, c);
    rep.ok = rep.trapped_cells.empty();
    return rep;
}

Dictionary generate_dictionary(int n, int count, int tau, uint64_t seed) {
    if (n < 4 || n > 6) throw ConfigError("dictionary n must be 4, 5 or 6");
    if (count < 1) throw ConfigError("dictionary count must be >= 1");
    if (tau < 1) throw ConfigError("dictionary tau must be >= 1");

    constexpr long kMaxDraws = 1000000;
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution bit(0.5);

    Dictionary dict;
    dict.n = n;
    dict.tau = tau;
    dict.seed = seed;
    dict.entries.reserve(count);

    for (long draw = 0; draw < kMaxDraws; ++draw) {
        MarkerBitGrid g(n);
        for (auto& b : g.bits) b = bit(rng) ? 1 : 0;

        if (self_rotational_distance(g) < tau) continue;
        if (!is_manufacturable(g).ok) continue;
        bool far_enough = true;
        for (const auto& e : dict.entries) {
            if (rotational_hamming(g, e) < tau) {
                far_enough = false;
                break;
            }
        }
        if (!far_enough) continue;

        dict.entries.push_back(std::move(g));
        if (static_cast<int>(dict.entries.size()) == count) return dict;
    }
    std::ostringstream oss;
    oss << "dictionary generation exhausted " << kMaxDraws << " draws at "
        << dict.entries.size() << "/" << count << " entries (n=" << n
        << ", tau=" << tau << ")";
    throw InfeasibleDictionary(oss.str());
}

std::optional<DecodeResult> decode_bits(const MarkerBitGrid& g, const Dictionary& dict,
                                        int max_corrections) {
    if (max_corrections > (dict.tau - 1) / 2)
        throw CorrectionBudgetTooLarge("max_corrections exceeds floor((tau-1)/2)");
    if (g.n != dict.n) throw DimensionMismatch("grid n does not match dictionary");

    std::optional<DecodeResult> best;
    for (int id = 0; id < static_cast<int>(dict.entries.size()); ++id) {
        MarkerBitGrid re = dict.entries[id];
        for (int k = 0; k < 4; ++k) {
            if (k > 0) re = rotate90(re);
            const int d = hamming(g, re);
            if (d <= max_corrections && (!best || d < best->bit_errors))
                best = DecodeResult{id, k, d};
        }
    }
    return best;
}

std::string DictionaryViolation::describe() const {
    char buf[160];
    switch (kind) {
        case Kind::PairDistance:
            std::snprintf(buf, sizeof(buf),
                          "entries %d and %d at rotation %d*90deg have distance %d",
                          id_a, id_b, rotation, distance);
            break;
        case Kind::SelfDistance:
            std::snprintf(buf, sizeof(buf),
                          "entry %d self rotational distance %d", id_a, distance);
            break;
        case Kind::NotManufacturable:
            std::snprintf(buf, sizeof(buf), "entry %d is not manufacturable", id_a);
            break;
        case Kind::BadBorderDimension:
            std::snprintf(buf, sizeof(buf), "entry %d has wrong dimension", id_a);
            break;
    }
    return buf;
}

std::vector<DictionaryViolation> verify_dictionary(const Dictionary& dict) {
    std::vector<DictionaryViolation> out;
    const int m = static_cast<int>(dict.entries.size());
    for (int i = 0; i < m; ++i) {
        const auto& e = dict.entries[i];
        if (e.n != dict.n || static_cast<int>(e.bits.size()) != dict.n * dict.n) {
            out.push_back({DictionaryViolation::Kind::BadBorderDimension, i, -1, 0, 0});
            continue;
        }
        const int sd = self_rotational_distance(e);
        if (sd < dict.tau)
            out.push_back({DictionaryViolation::Kind::SelfDistance, i, -1, 0, sd});
        if (!is_manufacturable(e).ok)
            out.push_back({DictionaryViolation::Kind::NotManufacturable, i, -1, 0, 0});
        for (int j = i + 1; j < m; ++j) {
            MarkerBitGrid rj = dict.entries[j];
            for (int k = 0; k < 4; ++k) {
                if (k > 0) rj = rotate90(rj);
                const int d = hamming(e, rj);
                if (d < dict.tau)
                    out.push_back({DictionaryViolation::Kind::PairDistance, i, j, k, d});
            }
        }
    }
    return out;
}

void save_dictionary(const Dictionary& dict, const std::string& path) {
    nlohmann::json j;
    j["n"] = dict.n;
    j["tau"] = dict.tau;
    j["seed"] = dict.seed;
    auto& entries = j["entries"] = nlohmann::json::array();
    for (int id = 0; id < static_cast<int>(dict.entries.size()); ++id)
        entries.push_back({{"id", id}, {"bits", dict.entries[id].to_bitstring()}});
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open dictionary file for writing: " + path);
    f << j.dump(2) << "\n";
}

Dictionary load_dictionary(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open dictionary file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed dictionary file " + path + ": " + e.what());
    }
    Dictionary dict;
    try {
        dict.n = j.at("n").get<int>();
        dict.tau = j.at("tau").get<int>();
        dict.seed = j.at("seed").get<uint64_t>();
        for (const auto& e : j.at("entries")) {
            const int id = e.at("id").get<int>();
            if (id != static_cast<int>(dict.entries.size()))
                throw ConfigError("dictionary entries must be contiguous ids from 0");
            dict.entries.push_back(
                MarkerBitGrid::from_bitstring(dict.n, e.at("bits").get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed dictionary file " + path + ": " + e.what());
    }
    return dict;
}

MarkerSpec MarkerSpec::for_grid(int id, double side_length, int n) {
    if (!(side_length > 0.0)) throw NonPositiveSide("marker side_length must be positive");
    MarkerSpec s;
    s.id = id;
    s.side_length = side_length;
    s.cell_size = side_length / (n + 2);
    return s;
}

namespace {

struct CutRect {
    int row, col, rows, cols;  // in code-region cells
};

// Greedy merge of ON cells into maximal axis-aligned rectangles: grow each
// uncovered run rightward, then downward while the same column span stays ON
// and uncovered.
std::vector<CutRect> merge_on_rectangles(const MarkerBitGrid& g) {
    const int n = g.n;
    std::vector<uint8_t> covered(static_cast<size_t>(n) * n, 0);
    auto is_free_on = [&](int r, int c) {
        return g.at(r, c) && !covered[static_cast<size_t>(r) * n + c];
    };
    std::vector<CutRect> rects;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            if (!is_free_on(r, c)) continue;
            int w = 1;
            while (c + w < n && is_free_on(r, c + w)) ++w;
            int h = 1;
            bool grow = true;
            while (r + h < n && grow) {
                for (int cc = c; cc < c + w; ++cc)
                    if (!is_free_on(r + h, cc)) { grow = false; break; }
                if (grow) ++h;
            }
            for (int rr = r; rr < r + h; ++rr)
                for (int cc = c; cc < c + w; ++cc)
                    covered[static_cast<size_t>(rr) * n + cc] = 1;
            rects.push_back({r, c, h, w});
        }
    }
    return rects;
}

void append_rect_path(std::string& svg, double x, double y, double w, double h) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "  <path d=\"M %.10g %.10g H %.10g V %.10g H %.10g Z\" "
                  "fill=\"none\" stroke=\"black\" stroke-width=\"0.1\"/>\n",
                  x, y, x + w, y + h, x);
    svg += buf;
}

}  // namespace

std::string export_cut_outline(const MarkerSpec& spec, const MarkerBitGrid& g) {
    if (!(spec.side_length > 0.0)) throw NonPositiveSide("marker side_length must be positive");
    const auto rep = is_manufacturable(g);
    if (!rep.ok) {
        std::ostringstream oss;
        oss << "grid has " << rep.trapped_cells.size()
            << " material cell(s) not connected to the border";
        throw NotManufacturable(oss.str());
    }

    const double side_mm = spec.side_length * 1000.0;
    const double cell_mm = side_mm / (g.n + 2);

    std::string svg;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
                  "width=\"%.10gmm\" height=\"%.10gmm\" viewBox=\"0 0 %.10g %.10g\">\n",
                  side_mm, side_mm, side_mm, side_mm);
    svg += buf;
    // sheet boundary
    append_rect_path(svg, 0.0, 0.0, side_mm, side_mm);
    // one path per merged ON rectangle; code cell (r,c) sits at sheet cell (r+1,c+1)
    for (const auto& rect : merge_on_rectangles(g)) {
        append_rect_path(svg, (rect.col + 1) * cell_mm, (rect.row + 1) * cell_mm,
                         rect.cols * cell_mm, rect.rows * cell_mm);
    }
    svg += "</svg>\n";
    return svg;
}

const Dictionary& default_dictionary() {
    static const Dictionary dict = generate_dictionary(4, 50, 5, 0);
    return dict;
}

}  // namespace thermloc
