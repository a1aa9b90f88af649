#ifndef MVFUSE_ERRORS_HPP
#define MVFUSE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mvfuse {

// Error categories map to process exit codes: config = 2, data = 3, numeric = 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DuplicateIdError : DataError {
    using DataError::DataError;
};
struct DataFormatError : DataError {
    using DataError::DataError;
};
struct EmptyCohortError : DataError {
    using DataError::DataError;
};
struct SchemaError : DataError {
    using DataError::DataError;
};
struct InsufficientSamplesError : DataError {
    using DataError::DataError;
};
struct DegenerateDataError : DataError {
    using DataError::DataError;
};
struct AlignmentError : DataError {
    using DataError::DataError;
};
struct RankError : DataError {
    using DataError::DataError;
};
struct MissingAllViewsError : DataError {
    using DataError::DataError;
};
struct MissingViewUnsupportedError : DataError {
    using DataError::DataError;
};
struct DateOrderError : DataError {
    using DataError::DataError;
};
struct DegenerateLabelsError : DataError {
    using DataError::DataError;
};
struct NoEventsError : DataError {
    using DataError::DataError;
};
struct EmptyInputError : DataError {
    using DataError::DataError;
};
struct StratificationError : DataError {
    using DataError::DataError;
};
struct NoComparablePairsError : DataError {
    using DataError::DataError;
};
struct AllTiedError : DataError {
    using DataError::DataError;
};
struct OutputExistsError : ConfigError {
    using ConfigError::ConfigError;
};

}  // namespace mvfuse

#endif
