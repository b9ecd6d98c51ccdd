#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace beamforge {

using cplx = std::complex<double>;
using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;
using rvec = Eigen::VectorXd;

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct dimension_error : error { using error::error; };
struct numeric_error : error { using error::error; };
struct config_error : error { using error::error; };
struct io_error : error { using error::error; };

struct parse_error : error {
    parse_error(const std::string& what, std::size_t byte_offset)
        : error(what + " (at byte " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

struct version_error : error {
    version_error(int found, int expected)
        : error("schema_version " + std::to_string(found) + " is not supported (expected "
                + std::to_string(expected) + ")"),
          found(found), expected(expected) {}
    int found;
    int expected;
};

inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt_to_dbm(double watt) { return 10.0 * std::log10(watt) + 30.0; }

} // namespace beamforge
