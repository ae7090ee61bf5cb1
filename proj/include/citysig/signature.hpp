#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "citysig/records.hpp"
#include "citysig/work_type.hpp"

namespace citysig {

using Vec8 = std::array<double, kWorkTypeCount>;

// Per-zone permit counts by work type.
struct ZoneCounts {
    std::string zone_id;
    std::array<uint64_t, kWorkTypeCount> counts{};

    uint64_t total() const;
};

// Composition vector: counts[t] / total. Entries sum to 1 for any zone
// with at least one permit.
struct ZoneSignature {
    std::string zone_id;
    Vec8 signature{};
    uint64_t total_permits = 0;
};

struct SignatureMatrix {
    std::vector<std::string> zone_ids; // sorted ascending, unique
    std::vector<Vec8> rows;            // rows[i] is the signature of zone_ids[i]
    std::vector<uint64_t> totals;      // permit count behind each row

    size_t size() const { return zone_ids.size(); }
    // Index of zone_id, or -1 when absent.
    ptrdiff_t find(const std::string& zone_id) const;
};

// Counts permits per zone. Output is sorted by zone_id; every zone that
// appears in the input appears exactly once.
std::vector<ZoneCounts> tally_permits(std::span<const PermitRecord> permits);

// counts -> composition. Throws "empty_zone" when the zone has no permits.
ZoneSignature signature_of(const ZoneCounts& counts);

// Throws "duplicate_zone" if two entries share a zone_id.
SignatureMatrix build_matrix(std::span<const ZoneSignature> signatures);

SignatureMatrix signatures_from_permits(std::span<const PermitRecord> permits);

void write_signatures_csv(std::ostream& out, const SignatureMatrix& m);
SignatureMatrix read_signatures_csv(std::istream& in);

} // namespace citysig
