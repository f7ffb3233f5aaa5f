#pragma once

#include "pcnn/analysis.hpp"
#include "pcnn/bundle_io.hpp"
#include "pcnn/conv.hpp"
#include "pcnn/delay_unit.hpp"
#include "pcnn/device_models.hpp"
#include "pcnn/errors.hpp"
#include "pcnn/idx.hpp"
#include "pcnn/matrix.hpp"
#include "pcnn/network.hpp"
#include "pcnn/ocu.hpp"
#include "pcnn/parallel.hpp"
#include "pcnn/seed.hpp"
#include "pcnn/waveform.hpp"
