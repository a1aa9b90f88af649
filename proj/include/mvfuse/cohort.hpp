#ifndef MVFUSE_COHORT_HPP
#define MVFUSE_COHORT_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvfuse/errors.hpp"

namespace mvfuse {

/// Calendar date as days since 1970-01-01. Arithmetic is in whole days;
/// years are days / 365.25.
struct Date {
    int serial = 0;

    auto operator<=>(const Date&) const = default;
};

Date parse_date(const std::string& iso);  // "YYYY-MM-DD"
std::string format_date(Date d);

constexpr double kDaysPerYear = 365.25;

inline double years_between(Date from, Date to) {
    return static_cast<double>(to.serial - from.serial) / kDaysPerYear;
}

enum class CodeSystem { Icd10, Icd9, Opcs4 };

CodeSystem parse_code_system(const std::string& name);
std::string code_system_name(CodeSystem cs);

struct EventRecord {
    std::string subject_id;
    std::string code;
    CodeSystem code_system = CodeSystem::Icd10;
    Date date;
};

struct CodePrefix {
    CodeSystem system = CodeSystem::Icd10;
    std::string prefix;  // matched case- and dot-insensitively
};

struct EndpointDefinition {
    std::string name;
    std::vector<CodePrefix> event_codes;
    std::vector<CodePrefix> exclusion_codes;
};

/// True when the record code starts with the prefix, ignoring case and dots.
bool code_matches(const std::string& code, const std::string& prefix);

struct EndpointDates {
    std::optional<Date> first_event;
    std::optional<Date> first_exclusion;
};

struct CohortRow {
    std::string subject_id;
    Date baseline_date;
    std::optional<Date> endpoint_date;
    Date censor_date;
    std::vector<double> covariates;
    std::optional<int> label;
    std::optional<double> time_years;
    std::optional<int> event_indicator;
};

struct CohortTable {
    std::vector<std::string> covariate_names;
    std::vector<CohortRow> rows;
};

std::vector<EventRecord> load_events_csv(const std::string& path);

/// Cohort CSV: subject_id, baseline_date, optional censor_date, covariates.
/// Subjects without their own censor date fall back to end_study_date.
CohortTable load_cohort_csv(const std::string& path, const std::string& id_column,
                            const std::string& baseline_column,
                            const std::optional<std::string>& censor_column,
                            const std::vector<std::string>& covariate_columns,
                            Date end_study_date);

std::map<std::string, EndpointDates> derive_endpoint(const std::vector<EventRecord>& records,
                                                     const EndpointDefinition& definition);

/// Remove subjects whose exclusion event is on or before baseline (prevalent
/// cases); attach endpoint dates for the survivors.
CohortTable apply_baseline_exclusion(const CohortTable& cohort,
                                     const std::map<std::string, EndpointDates>& endpoint_dates);

/// Binary label within (baseline, baseline + horizon]; subjects censored
/// before the horizon without an event are dropped.
CohortTable label_classification(const CohortTable& cohort, double horizon_years);

CohortTable build_survival_outcome(const CohortTable& cohort);

}  // namespace mvfuse

#endif
