#pragma once

#include "twindiag/classify.hpp"
#include "twindiag/report.hpp"

namespace twindiag::pipeline {

// Classifier window anchored at t0 plus evidence from the tail of the
// effective window ([t0+90 s, t0+120 s) in a full-length episode, pulled
// forward when the episode is shorter).
struct DiagnosisInputs {
    Eigen::MatrixXf classifier_window;  // 46 x 1500
    report::EvidenceSummary evidence;
};

DiagnosisInputs diagnosis_inputs(const data::Dataset& ds, const data::RunMeta& meta,
                                 residual::FeatureMode mode,
                                 const residual::FeatureStats& raw_stats,
                                 residual::Surrogate* surrogate);

// Stratified selection of non-nominal test runs, round-robin over classes.
std::vector<const data::RunMeta*> stratified_test_cases(const data::Dataset& ds, int count);

}  // namespace twindiag::pipeline
