#include "citysig/signature.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include "citysig/csv.hpp"
#include "citysig/error.hpp"

namespace citysig {

uint64_t ZoneCounts::total() const {
    return std::accumulate(counts.begin(), counts.end(), uint64_t{0});
}

ptrdiff_t SignatureMatrix::find(const std::string& zone_id) const {
    auto it = std::lower_bound(zone_ids.begin(), zone_ids.end(), zone_id);
    if (it == zone_ids.end() || *it != zone_id) return -1;
    return it - zone_ids.begin();
}

std::vector<ZoneCounts> tally_permits(std::span<const PermitRecord> permits) {
    std::map<std::string, std::array<uint64_t, kWorkTypeCount>> by_zone;
    for (const auto& p : permits) by_zone[p.zone_id][static_cast<size_t>(p.work_type)] += 1;

    std::vector<ZoneCounts> out;
    out.reserve(by_zone.size());
    for (auto& [zone, counts] : by_zone) out.push_back(ZoneCounts{zone, counts});
    return out;
}

ZoneSignature signature_of(const ZoneCounts& counts) {
    const uint64_t total = counts.total();
    if (total == 0) throw_data("empty_zone", "zone " + counts.zone_id + " has no permits");
    ZoneSignature s;
    s.zone_id = counts.zone_id;
    s.total_permits = total;
    for (size_t t = 0; t < kWorkTypeCount; ++t)
        s.signature[t] = static_cast<double>(counts.counts[t]) / static_cast<double>(total);
    return s;
}

SignatureMatrix build_matrix(std::span<const ZoneSignature> signatures) {
    std::vector<size_t> order(signatures.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return signatures[a].zone_id < signatures[b].zone_id; });

    SignatureMatrix m;
    m.zone_ids.reserve(signatures.size());
    m.rows.reserve(signatures.size());
    m.totals.reserve(signatures.size());
    for (size_t i : order) {
        if (!m.zone_ids.empty() && m.zone_ids.back() == signatures[i].zone_id)
            throw_data("duplicate_zone", "zone " + signatures[i].zone_id + " appears more than once");
        m.zone_ids.push_back(signatures[i].zone_id);
        m.rows.push_back(signatures[i].signature);
        m.totals.push_back(signatures[i].total_permits);
    }
    return m;
}

SignatureMatrix signatures_from_permits(std::span<const PermitRecord> permits) {
    auto tallies = tally_permits(permits);
    std::vector<ZoneSignature> sigs;
    sigs.reserve(tallies.size());
    for (const auto& t : tallies) sigs.push_back(signature_of(t));
    return build_matrix(sigs);
}

void write_signatures_csv(std::ostream& out, const SignatureMatrix& m) {
    CsvWriter w(out);
    std::vector<std::string> header{"zone_id"};
    for (auto name : kWorkTypeNames) header.emplace_back(name);
    header.emplace_back("total_permits");
    w.write_row(header);

    for (size_t i = 0; i < m.size(); ++i) {
        std::vector<std::string> row{m.zone_ids[i]};
        for (double v : m.rows[i]) row.push_back(format_double(v));
        row.push_back(std::to_string(m.totals[i]));
        w.write_row(row);
    }
}

SignatureMatrix read_signatures_csv(std::istream& in) {
    CsvReader reader(in);
    auto header = reader.next();
    if (!header) throw_data("empty_file", "signatures input has no header row");
    const size_t expected_cols = 2 + kWorkTypeCount;
    if (header->size() != expected_cols || (*header)[0] != "zone_id" || header->back() != "total_permits")
        throw_data("bad_row", "unexpected signatures header");
    for (size_t t = 0; t < kWorkTypeCount; ++t)
        if ((*header)[1 + t] != kWorkTypeNames[t])
            throw_data("bad_row", "unexpected signatures column: " + (*header)[1 + t]);

    std::vector<ZoneSignature> sigs;
    while (auto row = reader.next()) {
        if (row->size() != expected_cols) throw_data("bad_row", "signatures row has wrong column count");
        ZoneSignature s;
        s.zone_id = (*row)[0];
        for (size_t t = 0; t < kWorkTypeCount; ++t) {
            auto v = parse_double((*row)[1 + t]);
            if (!v) throw_data("bad_row", "bad signature value in zone " + s.zone_id);
            s.signature[t] = *v;
        }
        auto total = parse_int((*row)[1 + kWorkTypeCount]);
        if (!total || *total < 0) throw_data("bad_row", "bad total_permits in zone " + s.zone_id);
        s.total_permits = static_cast<uint64_t>(*total);
        sigs.push_back(std::move(s));
    }
    return build_matrix(sigs);
}

} // namespace citysig
