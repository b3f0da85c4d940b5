//! Multi-link LSP lifecycle on top of per-link G-BAM ledgers.
//!
//! Setup is planned link by link along the path on a scratch copy of the
//! link states. A victim chosen on one link is released from every link of
//! its own path before the next link is planned, so later links see the
//! freed bandwidth. The scratch copy replaces the live state only if every
//! link admits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbam::{GbamError, LinkState, ReclaimKind, SoftStepReport};
use crate::model::{Bandwidth, ClassId, GBamLinkConfig, LinkId, Lsp, LspId, LspRequest, LspState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("link {0} is not part of the network")]
    UnknownLink(LinkId),
    #[error("{0} is unknown")]
    UnknownLsp(LspId),
    #[error("{0} already exists")]
    DuplicateLsp(LspId),
    #[error("{lsp} already ended as {state:?}")]
    AlreadyTerminated { lsp: LspId, state: LspState },
    #[error("{0:?} is not a terminal state")]
    NotTerminal(LspState),
    #[error("on link {link}: {source}")]
    Link {
        link: LinkId,
        #[source]
        source: GbamError,
    },
}

/// An LSP torn down to make room for another one, or by a reconfiguration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VictimRecord {
    pub lsp: LspId,
    pub class: ClassId,
    pub kind: ReclaimKind,
    /// The link whose admission (or reconfiguration) selected the victim.
    pub link: LinkId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SetupOutcome {
    Established {
        victims: Vec<VictimRecord>,
        /// First link on which the new LSP is funded by a loan (LTH draw).
        loan_link: Option<LinkId>,
    },
    Blocked {
        /// First link that refused the request.
        link: LinkId,
    },
}

#[derive(Clone, Debug)]
pub struct Network {
    links: BTreeMap<LinkId, LinkState>,
    lsps: BTreeMap<LspId, Lsp>,
}

impl Network {
    /// A network whose links all start with `config`.
    pub fn new(links: impl IntoIterator<Item = LinkId>, config: &GBamLinkConfig) -> Self {
        Network {
            links: links
                .into_iter()
                .map(|l| (l, LinkState::new(config.clone())))
                .collect(),
            lsps: BTreeMap::new(),
        }
    }

    pub fn link(&self, id: LinkId) -> Option<&LinkState> {
        self.links.get(&id)
    }

    pub fn links(&self) -> impl Iterator<Item = (LinkId, &LinkState)> {
        self.links.iter().map(|(id, s)| (*id, s))
    }

    pub fn lsp(&self, id: LspId) -> Option<&Lsp> {
        self.lsps.get(&id)
    }

    pub fn lsps(&self) -> impl Iterator<Item = &Lsp> {
        self.lsps.values()
    }

    pub fn active_ids(&self) -> Vec<LspId> {
        self.lsps
            .values()
            .filter(|l| l.state == LspState::Active)
            .map(|l| l.request.id)
            .collect()
    }

    /// Configuration shared by all links (taken from the first link).
    pub fn config(&self) -> Option<&GBamLinkConfig> {
        self.links.values().next().map(LinkState::config)
    }

    pub fn overhang(&self) -> Bandwidth {
        self.links.values().map(LinkState::overhang).sum()
    }

    /// Tries to set up `request` on every link of its path.
    pub fn setup_lsp(&mut self, request: LspRequest, now: f64) -> Result<SetupOutcome, NetworkError> {
        if self.lsps.contains_key(&request.id) {
            return Err(NetworkError::DuplicateLsp(request.id));
        }
        for link in request.path.links() {
            if !self.links.contains_key(link) {
                return Err(NetworkError::UnknownLink(*link));
            }
        }
        let mut scratch: BTreeMap<LinkId, LinkState> = request
            .path
            .links()
            .iter()
            .map(|l| (*l, self.links[l].clone()))
            .collect();
        let mut victims: Vec<VictimRecord> = Vec::new();
        let mut loan_link = None;

        for &link in request.path.links() {
            let state = scratch.get_mut(&link).expect("path link");
            let decision = state
                .try_admit(request.class, request.bandwidth)
                .map_err(|source| NetworkError::Link { link, source })?;
            if decision.is_block() {
                return Ok(SetupOutcome::Blocked { link });
            }
            if loan_link.is_none()
                && decision
                    .funding()
                    .is_some_and(|f| f.has_lth_draw(request.class))
            {
                loan_link = Some(link);
            }
            let removed = state
                .commit(&decision, request.id)
                .map_err(|source| NetworkError::Link { link, source })?;
            for v in removed {
                let victim_path = self.lsps[&v.lsp].request.path.clone();
                for other in victim_path.links() {
                    if *other == link {
                        continue;
                    }
                    let st = match scratch.get_mut(other) {
                        Some(st) => st,
                        None => scratch
                            .entry(*other)
                            .or_insert_with(|| self.links[other].clone()),
                    };
                    st.release(v.lsp)
                        .map_err(|source| NetworkError::Link { link: *other, source })?;
                }
                victims.push(VictimRecord {
                    lsp: v.lsp,
                    class: v.class,
                    kind: v.kind,
                    link,
                });
            }
        }

        for (id, state) in scratch {
            self.links.insert(id, state);
        }
        for v in &victims {
            let lsp = self.lsps.get_mut(&v.lsp).expect("victim known");
            lsp.state = match v.kind {
                ReclaimKind::Preemption => LspState::Preempted,
                ReclaimKind::Devolution => LspState::Devolved,
            };
        }
        self.lsps.insert(
            request.id,
            Lsp {
                request,
                setup_time: now,
                state: LspState::Active,
            },
        );
        Ok(SetupOutcome::Established { victims, loan_link })
    }

    /// Releases an active LSP on every link of its path and records its
    /// terminal state.
    pub fn teardown_lsp(&mut self, id: LspId, terminal: LspState) -> Result<(), NetworkError> {
        if !terminal.is_terminal() {
            return Err(NetworkError::NotTerminal(terminal));
        }
        let lsp = self.lsps.get(&id).ok_or(NetworkError::UnknownLsp(id))?;
        if lsp.state != LspState::Active {
            return Err(NetworkError::AlreadyTerminated { lsp: id, state: lsp.state });
        }
        let path = lsp.request.path.clone();
        for link in path.links() {
            self.links
                .get_mut(link)
                .expect("path link")
                .release(id)
                .map_err(|source| NetworkError::Link { link: *link, source })?;
        }
        self.lsps.get_mut(&id).expect("known").state = terminal;
        Ok(())
    }

    /// Applies `config` to every link immediately. LSPs that no longer fit
    /// on some link are preempted network-wide.
    pub fn apply_config_hard(&mut self, config: &GBamLinkConfig) -> Vec<VictimRecord> {
        let ids: Vec<LinkId> = self.links.keys().copied().collect();
        let mut forced = Vec::new();
        for link in ids {
            let preempted = self
                .links
                .get_mut(&link)
                .expect("link")
                .apply_config_hard(config.clone());
            for lsp in preempted {
                let record = self.lsps.get_mut(&lsp).expect("active lsp");
                record.state = LspState::Preempted;
                let class = record.request.class;
                let path = record.request.path.clone();
                for other in path.links() {
                    if *other != link {
                        self.links
                            .get_mut(other)
                            .expect("path link")
                            .release(lsp)
                            .expect("lsp active on its path");
                    }
                }
                forced.push(VictimRecord {
                    lsp,
                    class,
                    kind: ReclaimKind::Preemption,
                    link,
                });
            }
        }
        forced
    }

    /// Applies one soft reconfiguration step to every link.
    pub fn apply_config_soft_step(&mut self, config: &GBamLinkConfig) -> BTreeMap<LinkId, SoftStepReport> {
        self.links
            .iter_mut()
            .map(|(id, state)| (*id, state.apply_config_soft_step(config.clone())))
            .collect()
    }
}
