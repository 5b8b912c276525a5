#pragma once

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "adaptsde/harness.hpp"

namespace adaptsde {

/// One line of the experiment CSV.
struct CsvRow {
    std::string experiment;
    std::string model;
    std::string method;
    std::string controller;
    double param = 0.0;
    std::size_t samples = 0;
    double avg_evals = 0.0;
    double error = 0.0;
    double std_err = 0.0;
    double slope = 0.0;
};

/// Round-trip formatting (%.17g); non-finite values print as nan / inf / -inf.
std::string format_number(double x);

void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const CsvRow& row);
void write_csv(std::ostream& os, const std::vector<CsvRow>& rows);

/// One row per grid point; every row carries the fitted rate.
std::vector<CsvRow> strong_error_rows(const StrongErrorReport& rep);

/// Ordered `key=value` lines.
class Summary {
public:
    void add(const std::string& key, double value);
    void add(const std::string& key, const std::string& value);
    void add(const std::string& key, bool value);
    void write(std::ostream& os) const;
    const std::vector<std::pair<std::string, std::string>>& entries() const { return kv_; }

private:
    std::vector<std::pair<std::string, std::string>> kv_;
};

/// Parses `key=value` lines back into pairs; blank lines and lines starting with '#' are skipped.
std::vector<std::pair<std::string, std::string>> parse_summary(const std::string& text);

}  // namespace adaptsde
