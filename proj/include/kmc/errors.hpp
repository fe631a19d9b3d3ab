#ifndef KMC_ERRORS_HPP_
#define KMC_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace kmc
{
    /// Base of every error thrown by the library.
    class Error : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

#define KMC_DECLARE_ERROR(Name)                \
    class Name : public Error                  \
    {                                          \
    public:                                    \
        using Error::Error;                    \
    };

    KMC_DECLARE_ERROR(InvalidTarget)
    KMC_DECLARE_ERROR(FormatError)
    KMC_DECLARE_ERROR(IndexError)
    KMC_DECLARE_ERROR(ShapeError)
    KMC_DECLARE_ERROR(DivisionByZero)
    KMC_DECLARE_ERROR(SingularMatrix)
    KMC_DECLARE_ERROR(NearSingular)
    KMC_DECLARE_ERROR(NumericError)
    KMC_DECLARE_ERROR(InvalidRate)
    KMC_DECLARE_ERROR(NotInitialized)
    KMC_DECLARE_ERROR(EmptyDataset)
    KMC_DECLARE_ERROR(EmptySequence)
    KMC_DECLARE_ERROR(LayoutError)
    KMC_DECLARE_ERROR(ConfigError)
    KMC_DECLARE_ERROR(IoError)

#undef KMC_DECLARE_ERROR

    // Carries the 1-based line number of the offending input line.
    class ParseError : public Error
    {
    public:
        ParseError(const std::string& what, int line)
            : Error(what + " (line " + std::to_string(line) + ")"), _line(line)
        {
        }

        int line() const noexcept { return _line; }

    private:
        int _line;
    };
}

#endif
