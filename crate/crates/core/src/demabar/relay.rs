//! Hop-limited flooding of epoch messages.
//!
//! Each communication round every agent broadcasts its own message plus the
//! messages it first received in the previous round. A message is created
//! with `hops_remaining = w` and loses one hop per transmission, so after
//! `w` rounds every agent holds exactly the messages of its `w`-neighbourhood.

use std::collections::BTreeMap;

use crate::topology::Topology;

/// The statistics an agent shares at the end of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMessage<S> {
    pub origin: usize,
    pub epoch: u32,
    pub sums: Vec<S>,
    pub counts: Vec<S>,
    pub hops_remaining: u32,
}

impl<S> EpochMessage<S> {
    pub fn key(&self) -> (usize, u32) {
        (self.origin, self.epoch)
    }
}

#[derive(Debug, Clone)]
struct Mailbox<S> {
    inbox: BTreeMap<(usize, u32), EpochMessage<S>>,
    fresh: Vec<(usize, u32)>,
}

impl<S> Default for Mailbox<S> {
    fn default() -> Self {
        Mailbox { inbox: BTreeMap::new(), fresh: Vec::new() }
    }
}

/// Per-agent inboxes for one epoch's communication step.
#[derive(Debug, Clone)]
pub struct Mailboxes<S> {
    boxes: Vec<Mailbox<S>>,
}

impl<S: Clone> Mailboxes<S> {
    pub fn new(agents: usize) -> Self {
        Mailboxes { boxes: (0..agents).map(|_| Mailbox::default()).collect() }
    }

    /// Clears every inbox and stores each agent's own message in its inbox.
    pub fn start(&mut self, own: &[EpochMessage<S>]) {
        for (mailbox, msg) in self.boxes.iter_mut().zip(own) {
            mailbox.inbox.clear();
            mailbox.fresh.clear();
            mailbox.inbox.insert(msg.key(), msg.clone());
        }
    }

    /// Runs one synchronous relay round and returns the number of broadcasts.
    ///
    /// `own[j]` is agent `j`'s message. `transmit(sender, recipient, msg)`
    /// produces what the recipient actually gets; honest senders pass the
    /// message through, Byzantine senders may rewrite it per recipient.
    pub fn relay_round<F>(&mut self, topology: &Topology, own: &[EpochMessage<S>], mut transmit: F) -> usize
    where
        F: FnMut(usize, usize, &EpochMessage<S>) -> EpochMessage<S>,
    {
        let n = self.boxes.len();
        // Outgoing batches are fixed before any delivery (synchronous round).
        let outgoing: Vec<Vec<EpochMessage<S>>> = (0..n)
            .map(|j| {
                let mailbox = &self.boxes[j];
                std::iter::once(&own[j])
                    .chain(mailbox.fresh.iter().map(|key| &mailbox.inbox[key]))
                    .filter(|m| m.hops_remaining > 0)
                    .cloned()
                    .collect()
            })
            .collect();

        let mut arrivals: Vec<Vec<EpochMessage<S>>> = vec![Vec::new(); n];
        let mut broadcasts = 0;
        for (sender, batch) in outgoing.iter().enumerate() {
            if batch.is_empty() {
                continue;
            }
            broadcasts += 1;
            for &recipient in topology.neighbors(sender) {
                for msg in batch {
                    let mut delivered = transmit(sender, recipient, msg);
                    delivered.hops_remaining = msg.hops_remaining - 1;
                    arrivals[recipient].push(delivered);
                }
            }
        }

        for (mailbox, incoming) in self.boxes.iter_mut().zip(arrivals) {
            mailbox.fresh.clear();
            for msg in incoming {
                let key = msg.key();
                if let std::collections::btree_map::Entry::Vacant(slot) = mailbox.inbox.entry(key) {
                    slot.insert(msg);
                    mailbox.fresh.push(key);
                }
            }
            mailbox.fresh.sort_unstable();
        }
        broadcasts
    }

    /// Messages currently held by `agent`, ordered by origin.
    pub fn inbox(&self, agent: usize) -> impl Iterator<Item = &EpochMessage<S>> {
        self.boxes[agent].inbox.values()
    }

    pub fn origins(&self, agent: usize) -> Vec<usize> {
        self.boxes[agent].inbox.keys().map(|k| k.0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(origin: usize, w: u32) -> EpochMessage<f64> {
        EpochMessage { origin, epoch: 1, sums: vec![origin as f64], counts: vec![1.0], hops_remaining: w }
    }

    fn flood(topology: &Topology, w: u32) -> (Mailboxes<f64>, usize) {
        let own: Vec<_> = (0..topology.node_count()).map(|i| msg(i, w)).collect();
        let mut boxes = Mailboxes::new(topology.node_count());
        boxes.start(&own);
        let mut broadcasts = 0;
        for _ in 0..w {
            broadcasts += boxes.relay_round(topology, &own, |_, _, m| m.clone());
        }
        (boxes, broadcasts)
    }

    #[test]
    fn one_hop_on_ring() {
        let ring = Topology::from_edges(5, (0..5).map(|i| (i, (i + 1) % 5))).unwrap();
        let (boxes, broadcasts) = flood(&ring, 1);
        assert_eq!(boxes.origins(0), vec![0, 1, 4]);
        assert_eq!(broadcasts, 5);
    }

    #[test]
    fn two_hops_on_path() {
        let path = Topology::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let own: Vec<_> = (0..3).map(|i| msg(i, 2)).collect();
        let mut boxes = Mailboxes::new(3);
        boxes.start(&own);
        boxes.relay_round(&path, &own, |_, _, m| m.clone());
        assert_eq!(boxes.origins(0), vec![0, 1]);
        boxes.relay_round(&path, &own, |_, _, m| m.clone());
        assert_eq!(boxes.origins(0), vec![0, 1, 2]);
    }

    #[test]
    fn duplicates_collapse() {
        // 0 hears from 3 over two different two-hop paths.
        let square = Topology::from_edges(4, [(0, 1), (1, 3), (0, 2), (2, 3)]).unwrap();
        let (boxes, _) = flood(&square, 2);
        assert_eq!(boxes.origins(0), vec![0, 1, 2, 3]);
        assert_eq!(boxes.inbox(0).count(), 4);
    }

    #[test]
    fn hop_limit_matches_neighborhoods() {
        let path = Topology::from_edges(6, (1..6).map(|i| (i - 1, i))).unwrap();
        for w in 0..=5 {
            let (boxes, broadcasts) = flood(&path, w);
            let stats = path.neighborhood_stats(w);
            for i in 0..6 {
                assert_eq!(boxes.origins(i), stats.neighborhoods[i], "w={w} i={i}");
            }
            assert_eq!(broadcasts, 6 * w as usize);
        }
    }

    #[test]
    fn transmit_can_forge_per_recipient() {
        let path = Topology::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let own: Vec<_> = (0..3).map(|i| msg(i, 1)).collect();
        let mut boxes = Mailboxes::new(3);
        boxes.start(&own);
        boxes.relay_round(&path, &own, |s, r, m| {
            let mut m = m.clone();
            if s == 1 {
                m.sums = vec![r as f64 * 10.0];
            }
            m
        });
        let from1 = |a: usize| boxes.inbox(a).find(|m| m.origin == 1).unwrap().sums[0];
        assert_eq!(from1(0), 0.0);
        assert_eq!(from1(2), 20.0);
    }
}
