#pragma once

#include "rcrb/error.hpp"
#include "rcrb/fisher.hpp"
#include "rcrb/multiagent.hpp"
#include "rcrb/parallel.hpp"
#include "rcrb/renderer.hpp"
#include "rcrb/scenes.hpp"
#include "rcrb/se3.hpp"
#include "rcrb/validation.hpp"
