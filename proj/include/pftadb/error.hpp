#ifndef PFTADB_ERROR_HPP
#define PFTADB_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pftadb {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PFTADB_DEFINE_ERROR(Name)              \
    class Name : public Error {                \
    public:                                    \
        using Error::Error;                    \
    };

PFTADB_DEFINE_ERROR(DimensionError)
PFTADB_DEFINE_ERROR(ConfigError)
PFTADB_DEFINE_ERROR(NumericError)
PFTADB_DEFINE_ERROR(PrefixError)
PFTADB_DEFINE_ERROR(PlanError)
PFTADB_DEFINE_ERROR(VocabError)
PFTADB_DEFINE_ERROR(LengthError)
PFTADB_DEFINE_ERROR(PoolingError)
PFTADB_DEFINE_ERROR(LabelError)
PFTADB_DEFINE_ERROR(DataError)
PFTADB_DEFINE_ERROR(ParseError)
PFTADB_DEFINE_ERROR(IoError)

#undef PFTADB_DEFINE_ERROR

/// Raised by the trainer when the loss stops being finite.
class DivergenceError : public NumericError {
public:
    DivergenceError(std::size_t epoch, const std::string& what)
        : NumericError("diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace pftadb

#endif  // PFTADB_ERROR_HPP
