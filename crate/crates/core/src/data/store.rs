use std::io::{self, BufRead, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::DataError;

/// Compressed sparse rows: user id → strictly increasing item ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionStore {
    num_users: usize,
    num_items: usize,
    row_offsets: Vec<usize>,
    item_ids: Vec<u32>,
}

impl InteractionStore {
    /// Checked constructor; every other constructor funnels through the same
    /// invariants.
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        row_offsets: Vec<usize>,
        item_ids: Vec<u32>,
    ) -> Result<Self, DataError> {
        if row_offsets.len() != num_users + 1 {
            return Err(DataError::InvalidStore(format!(
                "expected {} row offsets, got {}",
                num_users + 1,
                row_offsets.len()
            )));
        }
        if row_offsets[0] != 0 {
            return Err(DataError::InvalidStore("row_offsets[0] must be 0".into()));
        }
        if *row_offsets.last().unwrap() != item_ids.len() {
            return Err(DataError::InvalidStore(format!(
                "last row offset {} does not match {} item ids",
                row_offsets.last().unwrap(),
                item_ids.len()
            )));
        }
        for (u, w) in row_offsets.windows(2).enumerate() {
            if w[0] > w[1] {
                return Err(DataError::InvalidStore(format!(
                    "row_offsets decrease at user {u}"
                )));
            }
            let row = &item_ids[w[0]..w[1]];
            if row.windows(2).any(|p| p[0] >= p[1]) {
                return Err(DataError::InvalidStore(format!(
                    "items of user {u} are not strictly increasing"
                )));
            }
            if let Some(&last) = row.last() {
                if last as usize >= num_items {
                    return Err(DataError::InvalidStore(format!(
                        "user {u} references item {last} but num_items is {num_items}"
                    )));
                }
            }
        }
        Ok(Self {
            num_users,
            num_items,
            row_offsets,
            item_ids,
        })
    }

    pub fn empty(num_users: usize, num_items: usize) -> Self {
        Self {
            num_users,
            num_items,
            row_offsets: vec![0; num_users + 1],
            item_ids: Vec::new(),
        }
    }

    /// Builds a store from per-user item lists, deduplicating and sorting
    /// each row.
    pub fn from_rows(mut rows: Vec<Vec<u32>>, num_items: usize) -> Result<Self, DataError> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut item_ids = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            item_ids.extend_from_slice(row);
            row_offsets.push(item_ids.len());
        }
        Self::from_parts(rows.len(), num_items, row_offsets, item_ids)
    }

    pub fn from_pairs(
        num_users: usize,
        num_items: usize,
        pairs: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, DataError> {
        let mut rows = vec![Vec::new(); num_users];
        for (u, i) in pairs {
            let row = rows.get_mut(u as usize).ok_or_else(|| {
                DataError::InvalidStore(format!("user {u} out of range ({num_users} users)"))
            })?;
            row.push(i);
        }
        Self::from_rows(rows, num_items)
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    #[inline]
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    #[inline]
    pub fn num_interactions(&self) -> usize {
        self.item_ids.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn item_ids(&self) -> &[u32] {
        &self.item_ids
    }

    /// Items of `user`, ascending. Panics when `user >= num_users`.
    #[inline]
    pub fn row(&self, user: usize) -> &[u32] {
        &self.item_ids[self.row_offsets[user]..self.row_offsets[user + 1]]
    }

    /// Like [`row`](Self::row) but returns an empty slice for out-of-range users.
    pub fn row_or_empty(&self, user: usize) -> &[u32] {
        if user < self.num_users {
            self.row(user)
        } else {
            &[]
        }
    }

    pub fn contains(&self, user: usize, item: u32) -> bool {
        self.row_or_empty(user).binary_search(&item).is_ok()
    }

    pub fn user_degree(&self, user: usize) -> usize {
        self.row_offsets[user + 1] - self.row_offsets[user]
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_items];
        for &i in &self.item_ids {
            deg[i as usize] += 1;
        }
        deg
    }

    /// All `(user, item)` pairs in row order.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_users).flat_map(move |u| self.row(u).iter().map(move |&i| (u as u32, i)))
    }

    /// Users whose row is empty. They keep their embedding row but never
    /// contribute a training positive.
    pub fn empty_users(&self) -> Vec<u32> {
        (0..self.num_users)
            .filter(|&u| self.user_degree(u) == 0)
            .map(|u| u as u32)
            .collect()
    }

    /// Grows the id space; rows beyond the current users are empty.
    pub fn with_dims(&self, num_users: usize, num_items: usize) -> Result<Self, DataError> {
        if num_users < self.num_users || num_items < self.num_items {
            return Err(DataError::InvalidStore(format!(
                "cannot shrink store from {}x{} to {num_users}x{num_items}",
                self.num_users, self.num_items
            )));
        }
        let mut row_offsets = self.row_offsets.clone();
        row_offsets.resize(num_users + 1, self.item_ids.len());
        Ok(Self {
            num_users,
            num_items,
            row_offsets,
            item_ids: self.item_ids.clone(),
        })
    }

    /// Writes the adjacency-list text form: one line per user, the user id
    /// followed by its items.
    pub fn write_adjacency_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        for u in 0..self.num_users {
            write!(w, "{u}")?;
            for i in self.row(u) {
                write!(w, " {i}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub(crate) fn write_binary<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_u64::<LittleEndian>(self.num_users as u64)?;
        w.write_u64::<LittleEndian>(self.num_items as u64)?;
        w.write_u64::<LittleEndian>(self.row_offsets.len() as u64)?;
        for &o in &self.row_offsets {
            w.write_u64::<LittleEndian>(o as u64)?;
        }
        w.write_u64::<LittleEndian>(self.item_ids.len() as u64)?;
        for &i in &self.item_ids {
            w.write_u32::<LittleEndian>(i)?;
        }
        Ok(())
    }

    pub(crate) fn read_binary<R: Read>(r: &mut R) -> Result<Self, DataError> {
        let num_users = r.read_u64::<LittleEndian>()? as usize;
        let num_items = r.read_u64::<LittleEndian>()? as usize;
        let n_offsets = r.read_u64::<LittleEndian>()? as usize;
        if n_offsets != num_users.saturating_add(1) {
            return Err(DataError::Cache("offset count does not match user count".into()));
        }
        let mut row_offsets = Vec::with_capacity(n_offsets.min(1 << 24));
        for _ in 0..n_offsets {
            row_offsets.push(r.read_u64::<LittleEndian>()? as usize);
        }
        let n_items = r.read_u64::<LittleEndian>()? as usize;
        let mut item_ids = Vec::with_capacity(n_items.min(1 << 26));
        for _ in 0..n_items {
            item_ids.push(r.read_u32::<LittleEndian>()?);
        }
        Self::from_parts(num_users, num_items, row_offsets, item_ids)
    }
}

/// Parses the adjacency-list text format.
///
/// Each non-empty line holds whitespace-separated non-negative integers: a
/// user id followed by that user's item ids. A user may appear on several
/// lines; duplicates are dropped. `num_users` is the largest user id plus one
/// and `num_items` the larger of the largest item id plus one and the hint.
pub fn parse_adjacency_list<R: BufRead>(
    reader: R,
    num_items_hint: Option<usize>,
) -> Result<InteractionStore, DataError> {
    let mut rows: Vec<Vec<u32>> = Vec::new();
    let mut max_item: Option<u32> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else {
            continue;
        };
        let user = parse_id(first, line_no)? as usize;
        if user >= rows.len() {
            rows.resize_with(user + 1, Vec::new);
        }
        for tok in tokens {
            let item = parse_id(tok, line_no)?;
            max_item = Some(max_item.map_or(item, |m| m.max(item)));
            rows[user].push(item);
        }
    }
    let num_items = max_item
        .map_or(0, |m| m as usize + 1)
        .max(num_items_hint.unwrap_or(0));
    InteractionStore::from_rows(rows, num_items)
}

fn parse_id(tok: &str, line: usize) -> Result<u32, DataError> {
    let value: i64 = tok.parse().map_err(|_| DataError::Parse {
        line,
        message: format!("`{tok}` is not an integer"),
    })?;
    if value < 0 {
        return Err(DataError::Parse {
            line,
            message: format!("negative id {value}"),
        });
    }
    u32::try_from(value).map_err(|_| DataError::Parse {
        line,
        message: format!("id {value} exceeds the 32-bit id space"),
    })
}
