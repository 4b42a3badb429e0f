#pragma once

#include "pertkit/classifier.hpp"
#include "pertkit/harness.hpp"
#include "pertkit/spectral.hpp"

namespace pertkit::testing {

// Small end-to-end fixture shared by the unit suites: synthetic 8x8x1
// dataset, trained classifier, fitted basis. Built once per binary.
struct DeskFixture {
    harness::Dataset train;
    harness::Dataset test;
    classifier::MlpModel model;
    spectral::SpectralBasis basis;
    double sigma = 0.0;
    int coeff_count = 0;
};

const DeskFixture& desk();

}  // namespace pertkit::testing
