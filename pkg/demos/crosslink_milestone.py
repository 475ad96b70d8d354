"""
Cross-linking the artifacts of a publication
============================================

A milestone groups the report, the code snapshot and the data sets that
belong together. Meshing records reciprocal references between all of
them, so each repository record points at every other artifact.
"""

import json

from studyforge import crosslink as cl

ledger = cl.Ledger()
tag = cl.make_tag(2022, "jcp", "ccs")
cl.add_artifact(ledger, cl.ArtifactRecord("report", "report", pid="10.48550/arXiv.2208.00001",
                                          title="Preprint"))
cl.add_artifact(ledger, cl.ArtifactRecord("code", "code-snapshot", pid="10.5281/zenodo.7000001",
                                          title="Solver snapshot", vcs_tag=tag))
cl.add_artifact(ledger, cl.ArtifactRecord("data", "secondary-data", pid="10.48328/tudatalib-930",
                                          title="Secondary data"))
ledger.add_milestone("jcp-2022", ["report", "code", "data"], tag)

###############################################################################
# Before meshing the milestone is incomplete.

for finding in cl.validate_milestone(ledger, "jcp-2022"):
    print(finding.code, finding.subjects)

cl.cross_link_mesh(ledger, "jcp-2022")
print("pairs added:", ledger.last_mesh_added)
print("findings:", cl.validate_milestone(ledger, "jcp-2022"))

###############################################################################
# The metadata record for the data set, ready to paste into a repository.

print(json.dumps(json.loads(cl.render_repo_metadata(ledger, "data")), indent=2))
print(cl.readme_snippet(ledger, "jcp-2022"))

###############################################################################
# A corrected data set gets a new record linked to its predecessor.

v2 = cl.new_version(ledger, "data", "10.48328/tudatalib-930.2")
print(v2.local_id, v2.pid)
