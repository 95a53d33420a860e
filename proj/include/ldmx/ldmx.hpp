#pragma once

#include "ldmx/checkpoint.hpp"
#include "ldmx/convergence.hpp"
#include "ldmx/datasets.hpp"
#include "ldmx/denoisers.hpp"
#include "ldmx/diffusion.hpp"
#include "ldmx/error.hpp"
#include "ldmx/latentae.hpp"
#include "ldmx/numerics.hpp"
#include "ldmx/predictor.hpp"
#include "ldmx/promptx/embed.hpp"
#include "ldmx/promptx/entities.hpp"
#include "ldmx/promptx/extend.hpp"
#include "ldmx/promptx/io.hpp"
#include "ldmx/promptx/retrieval.hpp"
#include "ldmx/promptx/text.hpp"
#include "ldmx/promptx/wikiart.hpp"
#include "ldmx/samplers.hpp"
#include "ldmx/schedule.hpp"
