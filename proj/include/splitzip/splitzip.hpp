#pragma once

#include "splitzip/bitpack.hpp"
#include "splitzip/calibration.hpp"
#include "splitzip/codec.hpp"
#include "splitzip/container.hpp"
#include "splitzip/datagen.hpp"
#include "splitzip/error.hpp"
#include "splitzip/format.hpp"
#include "splitzip/parallel.hpp"
#include "splitzip/pipeline.hpp"
#include "splitzip/tensor.hpp"
