#pragma once

#include <string>
#include <vector>

namespace gridfreq {

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    std::string detail;
};

// Criterion ids covered by a suite: numerics, reduction, observer, mpc, e2e or all.
std::vector<int> suite_criteria(const std::string& suite);

// Runs the requested criteria in ascending order; shared scenario runs are computed once.
std::vector<CriterionResult> run_criteria(const std::vector<int>& ids);

// Compares a fresh full-architecture run against stored metrics (tolerance 1e-6).
CriterionResult check_golden_metrics(const std::string& path);

std::string format_result(const CriterionResult& r);

}  // namespace gridfreq
