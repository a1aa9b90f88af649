#include "mvfuse/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace mvfuse {

namespace {

// Howard Hinnant's civil-days algorithm.
int days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int>(doe) - 719468;
}

void civil_from_days(int z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<int>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace

Date parse_date(const std::string& iso) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (std::sscanf(iso.c_str(), "%d-%u-%u", &y, &m, &d) != 3 || m < 1 || m > 12 || d < 1 || d > 31)
        throw DataFormatError("cannot parse date '" + iso + "' (expected YYYY-MM-DD)");
    return {days_from_civil(y, m, d)};
}

std::string format_date(Date d) {
    int y;
    unsigned m, day;
    civil_from_days(d.serial, y, m, day);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, day);
    return buf;
}

CodeSystem parse_code_system(const std::string& name) {
    std::string low;
    for (char c : name) low.push_back(static_cast<char>(std::tolower(c)));
    if (low == "icd10") return CodeSystem::Icd10;
    if (low == "icd9") return CodeSystem::Icd9;
    if (low == "opcs4") return CodeSystem::Opcs4;
    throw DataFormatError("unknown code system '" + name + "'");
}

std::string code_system_name(CodeSystem cs) {
    switch (cs) {
        case CodeSystem::Icd10: return "icd10";
        case CodeSystem::Icd9: return "icd9";
        case CodeSystem::Opcs4: return "opcs4";
    }
    return "icd10";
}

namespace {

std::string normalize_code(const std::string& code) {
    std::string out;
    for (char c : code)
        if (c != '.') out.push_back(static_cast<char>(std::toupper(c)));
    return out;
}

}  // namespace

bool code_matches(const std::string& code, const std::string& prefix) {
    std::string c = normalize_code(code), p = normalize_code(prefix);
    return c.size() >= p.size() && c.compare(0, p.size(), p) == 0;
}

std::vector<EventRecord> load_events_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataFormatError("cannot open events file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataFormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    int id_idx = -1, sys_idx = -1, code_idx = -1, date_idx = -1;
    for (size_t j = 0; j < header.size(); ++j) {
        if (header[j] == "subject_id") id_idx = static_cast<int>(j);
        if (header[j] == "code_system") sys_idx = static_cast<int>(j);
        if (header[j] == "code") code_idx = static_cast<int>(j);
        if (header[j] == "date") date_idx = static_cast<int>(j);
    }
    if (id_idx < 0 || sys_idx < 0 || code_idx < 0 || date_idx < 0)
        throw DataFormatError(path + ": expected header subject_id,code_system,code,date");

    std::vector<EventRecord> records;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataFormatError(path + ": malformed line '" + line + "'");
        EventRecord r;
        r.subject_id = cells[static_cast<size_t>(id_idx)];
        r.code_system = parse_code_system(cells[static_cast<size_t>(sys_idx)]);
        r.code = cells[static_cast<size_t>(code_idx)];
        if (r.code.empty()) throw DataFormatError(path + ": empty code for '" + r.subject_id + "'");
        r.date = parse_date(cells[static_cast<size_t>(date_idx)]);
        records.push_back(std::move(r));
    }
    return records;
}

CohortTable load_cohort_csv(const std::string& path, const std::string& id_column,
                            const std::string& baseline_column,
                            const std::optional<std::string>& censor_column,
                            const std::vector<std::string>& covariate_columns,
                            Date end_study_date) {
    std::ifstream in(path);
    if (!in) throw DataFormatError("cannot open cohort file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataFormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);

    auto find_col = [&](const std::string& name) -> int {
        for (size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return static_cast<int>(j);
        return -1;
    };
    int id_idx = find_col(id_column);
    int base_idx = find_col(baseline_column);
    if (id_idx < 0) throw DataFormatError(path + ": id column '" + id_column + "' not found");
    if (base_idx < 0)
        throw DataFormatError(path + ": baseline column '" + baseline_column + "' not found");
    int censor_idx = -1;
    if (censor_column) {
        censor_idx = find_col(*censor_column);
        if (censor_idx < 0)
            throw DataFormatError(path + ": censor column '" + *censor_column + "' not found");
    }
    std::vector<int> cov_idx;
    for (const auto& c : covariate_columns) {
        int j = find_col(c);
        if (j < 0) throw DataFormatError(path + ": covariate column '" + c + "' not found");
        cov_idx.push_back(j);
    }

    CohortTable table;
    table.covariate_names = covariate_columns;
    std::unordered_set<std::string> seen;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataFormatError(path + ": malformed line '" + line + "'");
        CohortRow row;
        row.subject_id = cells[static_cast<size_t>(id_idx)];
        if (!seen.insert(row.subject_id).second)
            throw DuplicateIdError(path + ": duplicate subject id '" + row.subject_id + "'");
        row.baseline_date = parse_date(cells[static_cast<size_t>(base_idx)]);
        row.censor_date = end_study_date;
        if (censor_idx >= 0 && !cells[static_cast<size_t>(censor_idx)].empty()) {
            Date own = parse_date(cells[static_cast<size_t>(censor_idx)]);
            row.censor_date = std::min(own, end_study_date);
        }
        for (int j : cov_idx) {
            const std::string& cell = cells[static_cast<size_t>(j)];
            char* end = nullptr;
            double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || !std::isfinite(v))
                throw DataFormatError(path + ": cannot parse covariate '" + cell + "' for '" +
                                      row.subject_id + "'");
            row.covariates.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::map<std::string, EndpointDates> derive_endpoint(const std::vector<EventRecord>& records,
                                                     const EndpointDefinition& definition) {
    std::map<std::string, EndpointDates> out;
    auto matches_any = [](const EventRecord& r, const std::vector<CodePrefix>& prefixes) {
        for (const auto& p : prefixes)
            if (p.system == r.code_system && code_matches(r.code, p.prefix)) return true;
        return false;
    };
    for (const auto& r : records) {
        auto& dates = out[r.subject_id];
        if (matches_any(r, definition.event_codes))
            if (!dates.first_event || r.date < *dates.first_event) dates.first_event = r.date;
        if (matches_any(r, definition.exclusion_codes))
            if (!dates.first_exclusion || r.date < *dates.first_exclusion)
                dates.first_exclusion = r.date;
    }
    return out;
}

CohortTable apply_baseline_exclusion(const CohortTable& cohort,
                                     const std::map<std::string, EndpointDates>& endpoint_dates) {
    CohortTable out;
    out.covariate_names = cohort.covariate_names;
    for (const auto& row : cohort.rows) {
        auto it = endpoint_dates.find(row.subject_id);
        if (it != endpoint_dates.end() && it->second.first_exclusion &&
            *it->second.first_exclusion <= row.baseline_date)
            continue;  // prevalent at baseline
        CohortRow r = row;
        if (it != endpoint_dates.end()) r.endpoint_date = it->second.first_event;
        out.rows.push_back(std::move(r));
    }
    return out;
}

CohortTable label_classification(const CohortTable& cohort, double horizon_years) {
    if (horizon_years <= 0.0) throw ConfigError("label_classification: horizon must be positive");
    CohortTable out;
    out.covariate_names = cohort.covariate_names;
    for (const auto& row : cohort.rows) {
        CohortRow r = row;
        double event_years = row.endpoint_date
                                 ? years_between(row.baseline_date, *row.endpoint_date)
                                 : std::numeric_limits<double>::infinity();
        double censor_years = years_between(row.baseline_date, row.censor_date);
        if (row.endpoint_date && event_years > 0.0 && event_years <= horizon_years) {
            r.label = 1;
        } else if (censor_years >= horizon_years) {
            r.label = 0;
        } else {
            continue;  // censored before the horizon without an event
        }
        out.rows.push_back(std::move(r));
    }
    return out;
}

CohortTable build_survival_outcome(const CohortTable& cohort) {
    CohortTable out;
    out.covariate_names = cohort.covariate_names;
    for (const auto& row : cohort.rows) {
        if (row.censor_date < row.baseline_date)
            throw DateOrderError("build_survival_outcome: censor date before baseline for '" +
                                 row.subject_id + "'");
        CohortRow r = row;
        Date end = row.censor_date;
        int event = 0;
        if (row.endpoint_date && *row.endpoint_date <= row.censor_date) {
            end = *row.endpoint_date;
            event = 1;
        }
        double t = years_between(row.baseline_date, end);
        if (event == 1 && t <= 0.0) t = 0.5 / kDaysPerYear;  // keep risk sets well defined
        r.time_years = t;
        r.event_indicator = event;
        out.rows.push_back(std::move(r));
    }
    return out;
}

}  // namespace mvfuse
