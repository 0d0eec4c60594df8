#pragma once

#include "gfen/checkpoint.hpp"
#include "gfen/correlation.hpp"
#include "gfen/data_io.hpp"
#include "gfen/edc.hpp"
#include "gfen/errors.hpp"
#include "gfen/evaluation.hpp"
#include "gfen/fusion.hpp"
#include "gfen/model.hpp"
#include "gfen/periodicity.hpp"
#include "gfen/pipeline.hpp"
#include "gfen/rng.hpp"
#include "gfen/synthetic.hpp"
#include "gfen/training.hpp"
#include "gfen/types.hpp"
#include "gfen/umap.hpp"
