#pragma once

#include <stdexcept>
#include <string>

namespace mrt {

// Every failure the library can raise, grouped by how the CLI reports it:
// input problems exit 2, numerical problems exit 3, I/O problems exit 4.
enum class Err {
    // input / validation
    MissingColumn,
    TypeError,
    InvariantViolation,
    UnknownColumn,
    SpecViolation,
    DegenerateProbability,
    EmpiricalMeanOutOfRange,
    NegativeValue,
    NoAvailableRows,
    ShapeError,
    InvalidArgument,
    ParseError,
    // numerical
    RankDeficient,
    NonFiniteWeights,
    SingularBread,
    LeverageSingular,
    NotConverged,
    WindowRankDeficient,
    ReplicationFailure,
    // i/o
    IoError,
};

enum class ErrClass { Input = 2, Numerical = 3, Io = 4 };

inline ErrClass err_class(Err e)
{
    switch (e) {
    case Err::RankDeficient:
    case Err::NonFiniteWeights:
    case Err::SingularBread:
    case Err::LeverageSingular:
    case Err::NotConverged:
    case Err::WindowRankDeficient:
    case Err::ReplicationFailure:
        return ErrClass::Numerical;
    case Err::IoError:
        return ErrClass::Io;
    default:
        return ErrClass::Input;
    }
}

inline const char* err_name(Err e)
{
    switch (e) {
    case Err::MissingColumn: return "MissingColumn";
    case Err::TypeError: return "TypeError";
    case Err::InvariantViolation: return "InvariantViolation";
    case Err::UnknownColumn: return "UnknownColumn";
    case Err::SpecViolation: return "SpecViolation";
    case Err::DegenerateProbability: return "DegenerateProbability";
    case Err::EmpiricalMeanOutOfRange: return "EmpiricalMeanOutOfRange";
    case Err::NegativeValue: return "NegativeValue";
    case Err::NoAvailableRows: return "NoAvailableRows";
    case Err::ShapeError: return "ShapeError";
    case Err::InvalidArgument: return "InvalidArgument";
    case Err::ParseError: return "ParseError";
    case Err::RankDeficient: return "RankDeficient";
    case Err::NonFiniteWeights: return "NonFiniteWeights";
    case Err::SingularBread: return "SingularBread";
    case Err::LeverageSingular: return "LeverageSingular";
    case Err::NotConverged: return "NotConverged";
    case Err::WindowRankDeficient: return "WindowRankDeficient";
    case Err::ReplicationFailure: return "ReplicationFailure";
    case Err::IoError: return "IoError";
    }
    return "Unknown";
}

// Exception carrying the error code plus an optional 1-based data row number
// so CSV validation messages can point at the offending line.
class MrtError : public std::runtime_error {
public:
    MrtError(Err code, const std::string& message, long row = -1)
        : std::runtime_error(format(code, message, row)), code_(code), row_(row)
    {
    }

    Err code() const { return code_; }
    long row() const { return row_; }
    ErrClass cls() const { return err_class(code_); }

private:
    static std::string format(Err code, const std::string& message, long row)
    {
        std::string out = err_name(code);
        out += ": ";
        out += message;
        if (row >= 0) {
            out += " (row ";
            out += std::to_string(row);
            out += ")";
        }
        return out;
    }

    Err code_;
    long row_;
};

} // namespace mrt
