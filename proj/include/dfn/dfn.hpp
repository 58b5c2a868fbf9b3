#pragma once

// Core signal path. The control protocol and network service live in
// dfn/control.hpp and dfn/service.hpp.
#include "dfn/deep_filter.hpp"
#include "dfn/engine.hpp"
#include "dfn/erb.hpp"
#include "dfn/estimators.hpp"
#include "dfn/spectrum.hpp"
#include "dfn/stage_control.hpp"
#include "dfn/stft.hpp"
#include "dfn/wav.hpp"
