#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "thermloc/errors.hpp"

namespace thermloc {

// Binary code payload of one marker. bits is row-major, row 0 at the top of
// the canonical pattern; true = ON = cut hole = LWIR passes. A one-cell
// all-OFF (material) border surrounds the code region implicitly.
struct MarkerBitGrid {
    int n = 4;
    std::vector<uint8_t> bits;  // n*n entries of 0/1

    MarkerBitGrid() : bits(16, 0) {}
    explicit MarkerBitGrid(int n_) : n(n_), bits(static_cast<size_t>(n_) * n_, 0) {}

    bool at(int row, int col) const { return bits[static_cast<size_t>(row) * n + col] != 0; }
    void set(int row, int col, bool v) { bits[static_cast<size_t>(row) * n + col] = v ? 1 : 0; }
    int on_count() const;

    std::string to_bitstring() const;                    // row-major "0101..."
    static MarkerBitGrid from_bitstring(int n, const std::string& s);

    bool operator==(const MarkerBitGrid&) const = default;
};

// Quarter-turn rotation of the pattern, counterclockwise as displayed
// (row 0 on top). rotate(g, k) applies k quarter turns.
MarkerBitGrid rotate90(const MarkerBitGrid& g);
MarkerBitGrid rotate(const MarkerBitGrid& g, int quarter_turns);

// Cell-wise mismatch count; throws DimensionMismatch on different n.
int hamming(const MarkerBitGrid& a, const MarkerBitGrid& b);

// min over the four rotations of b.
int rotational_hamming(const MarkerBitGrid& a, const MarkerBitGrid& b);

// min over the three proper rotations of g against itself; >= tau makes the
// orientation of a detected pattern unambiguous.
int self_rotational_distance(const MarkerBitGrid& g);

struct ManufacturabilityReport {
    bool ok = true;
    // OFF (material) cells not 4-connected to the border frame; they would
    // fall out of the sheet after cutting.
    std::vector<std::pair<int, int>> trapped_cells;
};

// True iff every OFF cell reaches the implicit border ring through
// 4-connected OFF cells.
ManufacturabilityReport is_manufacturable(const MarkerBitGrid& g);

struct Dictionary {
    int n = 4;
    int tau = 5;
    uint64_t seed = 0;
    std::vector<MarkerBitGrid> entries;  // id == index
};

// Rejection sampling with greedy acceptance; deterministic for a fixed seed.
// Throws InfeasibleDictionary after 10^6 candidate draws.
Dictionary generate_dictionary(int n, int count, int tau, uint64_t seed);

struct DecodeResult {
    int id = -1;
    int rotation = 0;    // quarter turns, observed = rotate(entry, rotation)
    int bit_errors = 0;
};

// Unique decoding within max_corrections bit flips; max_corrections must not
// exceed floor((tau-1)/2). nullopt when nothing matches.
std::optional<DecodeResult> decode_bits(const MarkerBitGrid& g, const Dictionary& dict,
                                        int max_corrections);

struct DictionaryViolation {
    enum class Kind { PairDistance, SelfDistance, NotManufacturable, BadBorderDimension };
    Kind kind;
    int id_a = -1;
    int id_b = -1;
    int rotation = 0;
    int distance = 0;
    std::string describe() const;
};

// Exhaustive verifier: all pairs x 4 rotations, self-rotations, and
// manufacturability of every entry.
std::vector<DictionaryViolation> verify_dictionary(const Dictionary& dict);

void save_dictionary(const Dictionary& dict, const std::string& path);
Dictionary load_dictionary(const std::string& path);

// Physical sizing of a marker: side_length is the outer edge of the sheet,
// side_length = (n + 2) * cell_size.
struct MarkerSpec {
    int id = 0;
    double side_length = 0.2;  // meters
    double cell_size = 0.2 / 6.0;

    static MarkerSpec for_grid(int id, double side_length, int n);
};

// SVG 1.1 cut outline, millimeter user units: the sheet boundary plus one
// stroke-only path per maximal axis-aligned rectangle of merged ON cells.
// Throws NotManufacturable when the grid fails is_manufacturable.
std::string export_cut_outline(const MarkerSpec& spec, const MarkerBitGrid& g);

// Default dictionary used across the artifact (n=4, count=50, tau=5, seed=0).
const Dictionary& default_dictionary();

}  // namespace thermloc
