#pragma once

#include "common.hpp"
#include "image.hpp"
#include "scene.hpp"
#include "dataset_io.hpp"
#include "sampler.hpp"
#include "model.hpp"
#include "train.hpp"
#include "checkpoint.hpp"
#include "scoring.hpp"
#include "evaluation.hpp"
#include "localization.hpp"
#include "labels.hpp"
