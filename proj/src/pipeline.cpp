#include "twindiag/pipeline.hpp"

#include "twindiag/errors.hpp"

namespace twindiag::pipeline {

DiagnosisInputs diagnosis_inputs(const data::Dataset& ds, const data::RunMeta& meta,
                                 residual::FeatureMode mode,
                                 const residual::FeatureStats& raw_stats,
                                 residual::Surrogate* surrogate) {
    const auto episode = ds.load(meta.run_id);
    const int i0 = episode.t0_index(ds.dt());
    const residual::NormalizationCalib floor_calib;

    Eigen::MatrixXf normalized;  // 23 x T
    if (mode == residual::FeatureMode::mirror) {
        const auto mirror = ds.load(meta.mirror_run_id);
        normalized = residual::mirror_residual(episode, mirror);
        for (int c = 0; c < kNumMonitored; ++c) normalized.row(c) /= floor_calib.divisor(c);
    } else if (mode == residual::FeatureMode::surrogate) {
        if (!surrogate)
            throw InputError("diagnosis_inputs: surrogate path needs a trained surrogate");
        const int until = std::min<int>(episode.steps(), i0 + 6000);
        Eigen::MatrixXf raw = residual::surrogate_residual_raw(*surrogate, episode, until);
        normalized = residual::normalize_residual(raw, surrogate->calib, i0, ds.dt());
    } else {
        throw InputError("diagnosis_inputs: supports the mirror or surrogate paths");
    }

    DiagnosisInputs out;
    out.classifier_window.resize(2 * kNumMonitored, residual::kWindowSteps);
    out.classifier_window.topRows(kNumMonitored) =
        normalized.middleCols(i0, residual::kWindowSteps);
    out.classifier_window.bottomRows(kNumMonitored) =
        ((episode.frames.block(0, i0, kNumMonitored, residual::kWindowSteps).colwise() -
          raw_stats.mean)
             .array()
             .colwise() /
         raw_stats.std.array())
            .matrix();

    const int total = static_cast<int>(normalized.cols());
    const int tail_start = std::max(i0, std::min(i0 + 4500, total - residual::kWindowSteps));
    const int tail_len = std::min(residual::kWindowSteps, total - tail_start);
    out.evidence = report::analyze_evidence(normalized.middleCols(tail_start, tail_len).eval());
    return out;
}

std::vector<const data::RunMeta*> stratified_test_cases(const data::Dataset& ds, int count) {
    std::vector<const data::RunMeta*> cases;
    for (int round = 0; static_cast<int>(cases.size()) < count; ++round) {
        bool added = false;
        for (auto fc : faults::all_classes()) {
            if (fc == faults::FaultClass::nominal) continue;
            if (static_cast<int>(cases.size()) >= count) break;
            int seen = 0;
            for (const auto* meta : ds.runs_in(data::Split::test)) {
                if (meta->fault_class != fc) continue;
                if (seen++ == round) {
                    cases.push_back(meta);
                    added = true;
                    break;
                }
            }
        }
        if (!added) break;
    }
    return cases;
}

}  // namespace twindiag::pipeline
