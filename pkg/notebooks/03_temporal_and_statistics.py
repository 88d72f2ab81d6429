# %% [markdown]
# # Snapshot windows and cross-platform theme tests
#
# Two toy platforms with different posting rhythms: find each one's busiest
# four weeks, thin the larger one to equal volume, then test whether theme
# shares depend on the platform.

# %%
from datetime import datetime, timezone

import numpy as np

from clusterjudge.corpus import Corpus, Document
from clusterjudge.evaluate import chi_square_independence, cohens_kappa, kruskal_wallis, mann_whitney_u
from clusterjudge.temporal import (densest_window, label_universe, match_volume, restrict_to_window,
                                   theme_platform_table)

DAY = 86400
T0 = int(datetime(2020, 1, 1, tzinfo=timezone.utc).timestamp())
rng = np.random.default_rng(7)
themes = ["Recipes", "Activism", "Skincare"]


def platform(name, daily_rate, theme_p):
    docs, labels = [], {}
    for day, k in enumerate(rng.poisson(daily_rate)):
        for j in range(k):
            doc_id = f"{name}-{day}-{j}"
            docs.append(Document(doc_id, "post", platform=name, timestamp=T0 + day * DAY + 3600))
            labels[doc_id] = themes[rng.choice(3, p=theme_p)]
    return Corpus(docs), labels


# x is busy in February, bsky ramps up in March
x_rate = np.r_[np.full(31, 20), np.full(29, 60), np.full(31, 20)]
b_rate = np.r_[np.full(60, 2), np.full(31, 12)]
x, x_lab = platform("x", x_rate, [0.6, 0.2, 0.2])
bsky, b_lab = platform("bsky", b_rate, [0.3, 0.5, 0.2])
len(x), len(bsky)

# %%
wx, wb = densest_window(x, 28), densest_window(bsky, 28)
print("x   ", wx.start, "to", wx.end, wx.post_count)
print("bsky", wb.start, "to", wb.end, wb.post_count)

# %%
x_snap, b_snap = match_volume(restrict_to_window(x, wx), restrict_to_window(bsky, wb), seed=0)
table = theme_platform_table([x_lab[i] for i in x_snap.ids], [b_lab[i] for i in b_snap.ids],
                             label_universe(themes), ("x", "bsky"))
print(table.to_tsv())

# %%
chi = chi_square_independence(table.counts)
print(f"chi2={chi.statistic:.2f} df={chi.df} p={chi.p_value:.2e}")

# %% [markdown]
# The rank tests and agreement statistic on small hand-checkable inputs.

# %%
print(mann_whitney_u([1, 2, 3], [4, 5, 6]))
print(kruskal_wallis([[1, 2], [3, 4], [5, 6]]))
print(cohens_kappa([1, 1, 0, 0], [1, 0, 0, 0]))
