#pragma once

#include "madeasd/atlas.hpp"
#include "madeasd/classifier.hpp"
#include "madeasd/config.hpp"
#include "madeasd/connectivity.hpp"
#include "madeasd/data.hpp"
#include "madeasd/ensemble.hpp"
#include "madeasd/error.hpp"
#include "madeasd/evaluation.hpp"
#include "madeasd/feature_selection.hpp"
#include "madeasd/log.hpp"
#include "madeasd/nn.hpp"
#include "madeasd/random.hpp"
#include "madeasd/roi_report.hpp"
#include "madeasd/serialize.hpp"
#include "madeasd/ssdae.hpp"
#include "madeasd/text_io.hpp"
#include "madeasd/types.hpp"
