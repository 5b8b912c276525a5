#include "adaptsde/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace adaptsde {

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

std::string field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + '"';
}

}  // namespace

void write_csv_header(std::ostream& os) {
    os << "experiment,model,method,controller,param,samples,avg_evals,error,stderr,slope\n";
}

void write_csv_row(std::ostream& os, const CsvRow& r) {
    os << field(r.experiment) << ',' << field(r.model) << ',' << field(r.method) << ',' << field(r.controller) << ','
       << format_number(r.param)
       << ',' << r.samples << ',' << format_number(r.avg_evals) << ',' << format_number(r.error) << ','
       << format_number(r.std_err) << ',' << format_number(r.slope) << '\n';
}

void write_csv(std::ostream& os, const std::vector<CsvRow>& rows) {
    write_csv_header(os);
    for (const auto& r : rows) write_csv_row(os, r);
}

std::vector<CsvRow> strong_error_rows(const StrongErrorReport& rep) {
    std::vector<CsvRow> rows;
    for (const auto& p : rep.points)
        rows.push_back({"convergence", rep.model, rep.method, rep.controller, p.param, rep.samples_used, p.avg_evals,
                        p.error, p.std_err, rep.rate});
    return rows;
}

void Summary::add(const std::string& key, double value) { kv_.emplace_back(key, format_number(value)); }
void Summary::add(const std::string& key, const std::string& value) { kv_.emplace_back(key, value); }
void Summary::add(const std::string& key, bool value) { kv_.emplace_back(key, value ? "true" : "false"); }

void Summary::write(std::ostream& os) const {
    for (const auto& [k, v] : kv_) os << k << '=' << v << '\n';
}

std::vector<std::pair<std::string, std::string>> parse_summary(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return out;
}

}  // namespace adaptsde
