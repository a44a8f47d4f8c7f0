#pragma once

#include <Eigen/Dense>

#include "json.hpp"

#include <string>
#include <vector>

namespace accent::csvio {

using Json = nlohmann::ordered_json;

// All floating point output goes through this so artifacts are byte-stable.
std::string fmt_double(double v);

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::string& path);

void write_vector_csv(const std::string& path, const Eigen::VectorXd& v);

void write_json(const std::string& path, const Json& j);
Json read_json(const std::string& path);

// Numbers destined for JSON artifacts are stored as %.17g strings; this keeps
// nlohmann's float printer out of the hash-stability contract.
Json num(double v);
double as_num(const Json& j);

// Plain string table for manifests: first row is the header, unknown columns
// ride along untouched.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const;       // -1 when absent
    int require(const std::string& name) const;   // throws when absent
};

Table read_table(const std::string& path);
void write_table(const std::string& path, const Table& t);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace accent::csvio
